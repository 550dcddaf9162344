#include "morphinn/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "morphinn/eval.hpp"

namespace morphinn::cli {

namespace fs = std::filesystem;

namespace {

Task parse_task(const std::string& name) {
  if (name == "inflection") return Task::kInflection;
  if (name == "lemmatization") return Task::kLemmatization;
  throw std::invalid_argument("unknown task \"" + name +
                              "\" (expected inflection or lemmatization)");
}

std::set<std::string> parse_tag_list(const std::string& joined) {
  std::set<std::string> tags;
  std::istringstream ss(joined);
  std::string tag;
  while (std::getline(ss, tag, ';'))
    if (!tag.empty()) tags.insert(tag);
  return tags;
}

/// Make every lemma and surface of `records` decodable: compose missing words
/// from subwords and add them to the table.
void ensure_words(EmbeddingTable& table, const std::vector<MorphRecord>& records) {
  std::vector<std::pair<std::string, Vec>> extra;
  for (const auto& rec : records)
    for (const std::string* word : {&rec.lemma, &rec.surface})
      if (!table.contains(*word))
        extra.emplace_back(*word, compose_word_vector(*word, table));
  extend_vocabulary(table, extra);
}

}  // namespace

void cmd_gen_toy(const GenToyArgs& args, std::ostream& out) {
  ToyLangConfig cfg;
  cfg.lemma_count = args.lemmas;
  cfg.suffix_slots = args.slots;
  cfg.tags_per_slot = args.tags_per_slot;
  cfg.embedding_dim = args.dim;
  cfg.seed = args.seed;

  const ToyLanguage toy = generate_toy_language(cfg);
  fs::create_directories(args.out_dir);
  const std::string data_path = (fs::path(args.out_dir) / "dataset.tsv").string();
  const std::string emb_path = (fs::path(args.out_dir) / "embeddings.vec").string();
  write_dataset_file(toy.records, data_path);
  save_embeddings_file(toy.table, emb_path);

  out << "wrote " << toy.records.size() << " records to " << data_path << '\n'
      << "wrote " << toy.table.size() << " vectors (dim " << toy.table.dim()
      << ") to " << emb_path << '\n';
}

void cmd_train(const TrainArgs& args, std::ostream& out) {
  const Task task = parse_task(args.task);
  TrainConfig cfg = args.config_path.empty() ? TrainConfig{}
                                             : parse_config_file(args.config_path);
  validate(cfg);
  const auto& w = cfg.weights;
  if (w.alpha_x == 0 && w.alpha_t == 0 && w.alpha_y == 0 && w.alpha_z == 0)
    throw std::invalid_argument("config: loss weights must not all be zero");

  const EmbeddingTable table = load_embeddings_file(args.embeddings);
  const std::vector<MorphRecord> records = parse_dataset_file(args.data);
  const SplitResult split = split_dataset(records, cfg.split_train, cfg.split_dev,
                                          cfg.split_test, cfg.split_seed);
  const TagIndex tags = build_tag_index(split.train);
  std::ostream* log = args.quiet ? nullptr : &out;

  if (args.baseline) {
    if (!args.checkpoint.empty() || args.resume)
      throw std::invalid_argument("checkpointing supports the invertible model only");
    const BaselineResult r =
        train_baseline(task, split.train, split.dev, table, tags, cfg, log);
    save_baseline(r.model, tags, serialize_config(cfg), args.out);
    out << "saved baseline model to " << args.out << '\n';
    return;
  }

  std::optional<InnTrainer> trainer;
  if (args.resume) {
    if (args.checkpoint.empty())
      throw std::invalid_argument("--resume needs --checkpoint");
    // the checkpoint's own config defines the split it was trained with
    std::istringstream ckpt_cfg(peek_trainer_config(args.checkpoint));
    const TrainConfig saved = parse_config(ckpt_cfg);
    const SplitResult s = split_dataset(records, saved.split_train, saved.split_dev,
                                        saved.split_test, saved.split_seed);
    trainer.emplace(InnTrainer::resume_checkpoint(args.checkpoint, s.train, s.dev, table));
  } else {
    InnModel model = make_task_model(task, table.dim(), tags.size(), cfg);
    trainer.emplace(task, std::move(model), split.train, split.dev, table, tags, cfg);
  }

  while (!trainer->done()) {
    trainer->run_one_epoch();
    if (log) *log << format_epoch(trainer->history().epochs.back()) << '\n';
    if (!args.checkpoint.empty()) trainer->save_checkpoint(args.checkpoint);
  }

  save_model(trainer->best_model(), trainer->tags(),
             serialize_config(trainer->config()), args.out);
  out << "saved model to " << args.out << '\n';
}

void cmd_eval(const EvalArgs& args, std::ostream& out) {
  EmbeddingTable table = load_embeddings_file(args.embeddings);
  const std::vector<MorphRecord> records = parse_dataset_file(args.data);

  const ModelKind kind = peek_model_kind(args.model);
  std::string config_text;
  if (kind == ModelKind::kInn) config_text = load_model(args.model).config_text;
  else config_text = load_baseline(args.model).config_text;

  TrainConfig cfg;
  if (!config_text.empty()) {
    std::istringstream ss(config_text);
    cfg = parse_config(ss);
  }

  std::vector<MorphRecord> subset;
  if (args.split == "all") {
    subset = records;
  } else {
    const SplitResult split = split_dataset(records, cfg.split_train, cfg.split_dev,
                                            cfg.split_test, cfg.split_seed);
    if (args.split == "train") subset = split.train;
    else if (args.split == "dev") subset = split.dev;
    else if (args.split == "test") subset = split.test;
    else throw std::invalid_argument("unknown split \"" + args.split + "\"");
  }
  if (subset.empty()) throw std::runtime_error("selected split is empty");

  ensure_words(table, subset);
  if (args.distractors > 0)
    add_random_distractors(table, args.distractors, args.distractor_seed);

  EvalReport report;
  if (kind == ModelKind::kInn) {
    const LoadedModel lm = load_model(args.model);
    report = evaluate_inn(lm.model, subset, table, lm.tags);
    if (args.macro_f1 && lm.model.layout.task == Task::kInflection) {
      // recompute the tag score with the macro average
      std::vector<std::set<std::string>> pred, gold;
      for (const auto& rec : subset) {
        pred.push_back(predict_analysis(lm.model, rec.surface, table, lm.tags).tags);
        gold.push_back(rec.tags);
      }
      out << "macro tag F1: " << tag_f1_macro(pred, gold) << '\n';
    }
  } else {
    const LoadedBaseline lb = load_baseline(args.model);
    report = evaluate_baseline(lb.model, subset, table, lb.tags);
  }
  report.row_name = "model";
  if (!config_text.empty()) {
    std::istringstream ss(config_text);
    report.fingerprint = config_fingerprint(parse_config(ss));
  }

  const std::vector<EvalReport> reports{report};
  out << format_report_table(reports) << format_report_records(reports);
}

void cmd_inflect(const InflectArgs& args, std::ostream& out) {
  const LoadedModel lm = load_model(args.model);
  const EmbeddingTable table = load_embeddings_file(args.embeddings);
  const std::set<std::string> tags = parse_tag_list(args.tags);

  std::size_t dropped = 0;
  tag_vector(tags, lm.tags, &dropped);
  if (dropped > 0)
    out << "warning: " << dropped << " tag(s) not in the training index\n";
  out << predict_inflection(lm.model, args.lemma, tags, table, lm.tags) << '\n';
}

void cmd_analyze(const AnalyzeArgs& args, std::ostream& out) {
  const LoadedModel lm = load_model(args.model);
  const EmbeddingTable table = load_embeddings_file(args.embeddings);

  Analysis analysis;
  if (args.sample) {
    Rng rng(mix_seed(args.seed, 0x616e6cULL));
    analysis = predict_analysis(lm.model, args.surface, table, lm.tags,
                                ZMode::kSampled, args.tau, &rng);
  } else {
    analysis = predict_analysis(lm.model, args.surface, table, lm.tags);
  }

  out << "lemma\t" << analysis.lemma << '\n';
  out << "tags\t";
  bool first = true;
  for (const auto& tag : analysis.tags) {
    if (!first) out << ';';
    out << tag;
    first = false;
  }
  out << '\n';
}

void cmd_lemmatize(const LemmatizeArgs& args, std::ostream& out) {
  const LoadedModel lm = load_model(args.model);
  const EmbeddingTable table = load_embeddings_file(args.embeddings);
  out << predict_lemma(lm.model, args.surface, table) << '\n';
}

void cmd_sample_surfaces(const SampleArgs& args, std::ostream& out) {
  const LoadedModel lm = load_model(args.model);
  const EmbeddingTable table = load_embeddings_file(args.embeddings);
  Rng rng(mix_seed(args.seed, 0x73616d70ULL));
  const std::vector<std::string> samples =
      sample_surfaces(lm.model, args.lemma, args.n, args.tau, rng, table);
  for (const auto& s : samples) out << s << '\n';
  out << "distinct\t" << distinct_count(samples) << '\n';
}

void cmd_ablate(const AblateArgs& args, std::ostream& out) {
  AblationGrid grid = parse_grid_file(args.grid);
  const std::string data_path = args.data.empty() ? grid.data_path : args.data;
  const std::string emb_path =
      args.embeddings.empty() ? grid.embeddings_path : args.embeddings;
  if (data_path.empty())
    throw std::invalid_argument("ablate: no data path (grid key or --data)");
  if (emb_path.empty())
    throw std::invalid_argument("ablate: no embeddings path (grid key or --embeddings)");

  EmbeddingTable table = load_embeddings_file(emb_path);
  const std::vector<MorphRecord> records = parse_dataset_file(data_path);
  ensure_words(table, records);

  const std::vector<EvalReport> reports =
      run_ablation(grid, records, table, args.quiet ? nullptr : &out);
  out << format_report_table(reports) << format_report_records(reports);
}

}  // namespace morphinn::cli
