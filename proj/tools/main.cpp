// Command-line front end: toy-corpus generation, training, evaluation, the
// four prediction commands, and the ablation runner.

#include <iostream>

#include <CLI11.hpp>

#include "morphinn/cli.hpp"

int main(int argc, char** argv) {
  using namespace morphinn::cli;

  CLI::App app{"invertible morphology toolkit"};
  app.require_subcommand(1);

  GenToyArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-toy", "generate a synthetic toy corpus");
  gen_cmd->add_option("--lemmas", gen.lemmas, "number of lemmas");
  gen_cmd->add_option("--slots", gen.slots, "number of suffix slots");
  gen_cmd->add_option("--tags-per-slot", gen.tags_per_slot, "tags per slot");
  gen_cmd->add_option("--dim", gen.dim, "embedding dimension");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--out-dir", gen.out_dir, "output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--task", train.task, "inflection or lemmatization");
  train_cmd->add_option("--data", train.data, "dataset TSV")->required();
  train_cmd->add_option("--embeddings", train.embeddings, "embedding file")->required();
  train_cmd->add_option("--config", train.config_path, "config file (key = value)");
  train_cmd->add_option("--out", train.out, "output model path")->required();
  train_cmd->add_option("--checkpoint", train.checkpoint,
                        "trainer checkpoint, written after every epoch");
  train_cmd->add_flag("--resume", train.resume, "resume from --checkpoint");
  train_cmd->add_flag("--baseline", train.baseline,
                      "train the feed-forward baseline instead");
  train_cmd->add_flag("--quiet", train.quiet, "suppress per-epoch log lines");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model");
  eval_cmd->add_option("--model", eval.model, "model file")->required();
  eval_cmd->add_option("--data", eval.data, "dataset TSV")->required();
  eval_cmd->add_option("--embeddings", eval.embeddings, "embedding file")->required();
  eval_cmd->add_option("--distractors", eval.distractors,
                       "random distractor vectors to add");
  eval_cmd->add_option("--distractor-seed", eval.distractor_seed, "distractor seed");
  eval_cmd->add_option("--split", eval.split, "train, dev, test, or all");
  eval_cmd->add_flag("--macro-f1", eval.macro_f1, "also print macro-averaged tag F1");

  InflectArgs inflect;
  auto* inflect_cmd = app.add_subcommand("inflect", "lemma + tags -> surface form");
  inflect_cmd->add_option("--model", inflect.model, "model file")->required();
  inflect_cmd->add_option("--embeddings", inflect.embeddings, "embedding file")->required();
  inflect_cmd->add_option("--lemma", inflect.lemma, "lemma")->required();
  inflect_cmd->add_option("--tags", inflect.tags, "semicolon-joined tags");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "surface form -> lemma + tags");
  analyze_cmd->add_option("--model", analyze.model, "model file")->required();
  analyze_cmd->add_option("--embeddings", analyze.embeddings, "embedding file")->required();
  analyze_cmd->add_option("--surface", analyze.surface, "surface form")->required();
  analyze_cmd->add_flag("--sample", analyze.sample, "sample z instead of hardening");
  analyze_cmd->add_option("--tau", analyze.tau, "sampling temperature");
  analyze_cmd->add_option("--seed", analyze.seed, "sampling seed");

  LemmatizeArgs lemmatize;
  auto* lem_cmd = app.add_subcommand("lemmatize", "surface form -> lemma");
  lem_cmd->add_option("--model", lemmatize.model, "model file")->required();
  lem_cmd->add_option("--embeddings", lemmatize.embeddings, "embedding file")->required();
  lem_cmd->add_option("--surface", lemmatize.surface, "surface form")->required();

  SampleArgs sample;
  auto* sample_cmd =
      app.add_subcommand("sample-surfaces", "sample surface forms for a lemma");
  sample_cmd->add_option("--model", sample.model, "model file")->required();
  sample_cmd->add_option("--embeddings", sample.embeddings, "embedding file")->required();
  sample_cmd->add_option("--lemma", sample.lemma, "lemma")->required();
  sample_cmd->add_option("-n", sample.n, "number of samples");
  sample_cmd->add_option("--tau", sample.tau, "sampling temperature");
  sample_cmd->add_option("--seed", sample.seed, "sampling seed");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  ablate_cmd->add_option("--config-grid", ablate.grid, "grid file")->required();
  ablate_cmd->add_option("--data", ablate.data, "dataset TSV (overrides grid)");
  ablate_cmd->add_option("--embeddings", ablate.embeddings,
                         "embedding file (overrides grid)");
  ablate_cmd->add_flag("--quiet", ablate.quiet, "suppress per-epoch log lines");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) cmd_gen_toy(gen, std::cout);
    else if (train_cmd->parsed()) cmd_train(train, std::cout);
    else if (eval_cmd->parsed()) cmd_eval(eval, std::cout);
    else if (inflect_cmd->parsed()) cmd_inflect(inflect, std::cout);
    else if (analyze_cmd->parsed()) cmd_analyze(analyze, std::cout);
    else if (lem_cmd->parsed()) cmd_lemmatize(lemmatize, std::cout);
    else if (sample_cmd->parsed()) cmd_sample_surfaces(sample, std::cout);
    else if (ablate_cmd->parsed()) cmd_ablate(ablate, std::cout);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error (invalid input): " << e.what() << '\n';
    return 3;
  } catch (const std::runtime_error& e) {
    std::cerr << "error (data/model): " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  }
  return 0;
}
