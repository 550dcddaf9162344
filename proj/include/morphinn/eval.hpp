#pragma once

// Metrics (exact match, multi-label tag F1), the prediction pipelines for
// inflection / analysis / lemmatization / surface sampling, evaluation
// reports, and the ablation runner.

#include <set>
#include <string>
#include <vector>

#include "morphinn/training.hpp"

namespace morphinn {

/// 100 * (#exact string matches) / n.
double exact_match(const std::vector<std::string>& predictions,
                   const std::vector<std::string>& golds);

/// Micro-averaged F1 over all (instance, tag) decisions, times 100.
/// Empty-vs-empty pairs contribute nothing; 100 when no decision was wrong.
double tag_f1(const std::vector<std::set<std::string>>& pred_sets,
              const std::vector<std::set<std::string>>& gold_sets);

/// Macro average of per-tag F1 scores, times 100.
double tag_f1_macro(const std::vector<std::set<std::string>>& pred_sets,
                    const std::vector<std::set<std::string>>& gold_sets);

/// x = [lemma vector; tag indicator], forward pass, decode y by cosine
/// nearest neighbor.
std::string predict_inflection(const InnModel& model, const std::string& lemma,
                               const std::set<std::string>& tags,
                               const EmbeddingTable& table, const TagIndex& index);

struct Analysis {
  std::string lemma;
  std::set<std::string> tags;
};

enum class ZMode { kHardened, kSampled };

/// Inverse pass on (surface vector, z). In hardened mode z is bootstrapped
/// deterministically: a first inverse pass with the uniform prior mean gives
/// a provisional x, whose forward pass yields the model's own z logits; those
/// are hardened to one-hot and the inverse pass is rerun. In sampled mode z
/// is drawn from the prior at temperature tau. Tags are the positions whose
/// sigmoid activation exceeds 0.5.
Analysis predict_analysis(const InnModel& model, const std::string& surface,
                          const EmbeddingTable& table, const TagIndex& index,
                          ZMode mode = ZMode::kHardened, double tau = 1.0,
                          Rng* rng = nullptr);

/// Forward pass of a lemmatization model, nearest-neighbor decode.
std::string predict_lemma(const InnModel& model, const std::string& surface,
                          const EmbeddingTable& table);

/// n inverse passes of a lemmatization model with independent Gumbel-Softmax
/// draws of z at temperature tau. `logits` defaults to the uniform prior
/// (all zeros).
std::vector<std::string> sample_surfaces(const InnModel& model,
                                         const std::string& lemma, std::size_t n,
                                         double tau, Rng& rng,
                                         const EmbeddingTable& table,
                                         const Vec& logits = {});

std::size_t distinct_count(const std::vector<std::string>& words);

struct EvalReport {
  Task task = Task::kInflection;
  std::string row_name;
  double lemma_em = -1.0;    // negative = not applicable
  double surface_em = -1.0;
  double tag_f1 = -1.0;
  std::size_t count = 0;
  std::string fingerprint;
  std::string error;  // nonempty when this row failed
};

EvalReport evaluate_inn(const InnModel& model, const std::vector<MorphRecord>& records,
                        const EmbeddingTable& table, const TagIndex& index);

EvalReport evaluate_baseline(const BaselineModel& model,
                             const std::vector<MorphRecord>& records,
                             const EmbeddingTable& table, const TagIndex& index);

/// One training+evaluation configuration of the ablation grid.
struct AblationRow {
  std::string name;
  TrainConfig cfg;
  bool baseline = false;
};

struct AblationGrid {
  Task task = Task::kInflection;
  TrainConfig base;
  std::vector<AblationRow> rows;
  std::string data_path;        // optional, overridable on the command line
  std::string embeddings_path;  // optional
};

/// Grid file: the flat TrainConfig keys plus
///   task = inflection | lemmatization
///   data = <tsv path>, embeddings = <vec path>   (optional)
///   rows = <preset>[,<preset>...]          (default: the task's full set)
///   row.<name> = key=value[;key=value...]  (custom row from the base config)
/// Presets: baseline, ly, ly_lx, ly_lx_lt (inflection);
///          baseline, no_z, z2x3, z6x4 (lemmatization).
AblationGrid parse_grid(std::istream& in);
AblationGrid parse_grid_file(const std::string& path);

/// Trains every row from the shared seed and evaluates on the held-out test
/// split. Failures are reported per row, not propagated.
std::vector<EvalReport> run_ablation(const AblationGrid& grid,
                                     const std::vector<MorphRecord>& records,
                                     const EmbeddingTable& table,
                                     std::ostream* log = nullptr);

std::string format_report_table(const std::vector<EvalReport>& reports);
std::string format_report_records(const std::vector<EvalReport>& reports);

}  // namespace morphinn
