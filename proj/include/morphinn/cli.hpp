#pragma once

// Command implementations behind the CLI front end. Kept callable in-process
// so tests can drive the exact code paths the binary runs.

#include <cstdint>
#include <iosfwd>
#include <string>

namespace morphinn::cli {

struct GenToyArgs {
  std::size_t lemmas = 200;
  std::size_t slots = 3;
  std::size_t tags_per_slot = 2;
  std::size_t dim = 100;
  std::uint64_t seed = 1;
  std::string out_dir;
};

void cmd_gen_toy(const GenToyArgs& args, std::ostream& out);

struct TrainArgs {
  std::string task = "inflection";
  std::string data;
  std::string embeddings;
  std::string config_path;  // optional; defaults otherwise
  std::string out;
  std::string checkpoint;  // optional; written after every epoch
  bool resume = false;
  bool baseline = false;
  bool quiet = false;
};

void cmd_train(const TrainArgs& args, std::ostream& out);

struct EvalArgs {
  std::string model;
  std::string data;
  std::string embeddings;
  std::size_t distractors = 0;
  std::uint64_t distractor_seed = 1;
  std::string split = "test";  // train | dev | test | all
  bool macro_f1 = false;
};

void cmd_eval(const EvalArgs& args, std::ostream& out);

struct InflectArgs {
  std::string model;
  std::string embeddings;
  std::string lemma;
  std::string tags;  // semicolon-joined
};

void cmd_inflect(const InflectArgs& args, std::ostream& out);

struct AnalyzeArgs {
  std::string model;
  std::string embeddings;
  std::string surface;
  bool sample = false;
  double tau = 1.0;
  std::uint64_t seed = 1;
};

void cmd_analyze(const AnalyzeArgs& args, std::ostream& out);

struct LemmatizeArgs {
  std::string model;
  std::string embeddings;
  std::string surface;
};

void cmd_lemmatize(const LemmatizeArgs& args, std::ostream& out);

struct SampleArgs {
  std::string model;
  std::string embeddings;
  std::string lemma;
  std::size_t n = 10;
  double tau = 1.0;
  std::uint64_t seed = 1;
};

void cmd_sample_surfaces(const SampleArgs& args, std::ostream& out);

struct AblateArgs {
  std::string grid;
  std::string data;        // overrides the grid file's data path
  std::string embeddings;  // overrides the grid file's embeddings path
  bool quiet = false;
};

void cmd_ablate(const AblateArgs& args, std::ostream& out);

}  // namespace morphinn::cli
