#pragma once

// Bi-directional training for both tasks, the feed-forward baseline,
// plateau learning-rate decay, early stopping, and checkpoint I/O.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "morphinn/embedding.hpp"
#include "morphinn/flow.hpp"
#include "morphinn/latent.hpp"
#include "morphinn/loss.hpp"
#include "morphinn/morphdata.hpp"

namespace morphinn {

struct TrainConfig {
  int epochs = 30;
  double learning_rate = 1e-3;
  double plateau_factor = 0.3;
  int plateau_patience = 5;
  int early_stop_patience = 10;
  double clip_norm = 5.0;
  LossWeights weights;  // 20 / 10 / 80 / 1

  std::size_t z_dim = 2;
  std::size_t z_cat = 3;
  double tau = 1.0;
  bool tau_anneal = false;
  double tau_end = 0.5;

  std::size_t blocks = 3;
  std::size_t hidden = 128;
  std::size_t mlp_layers = 3;

  std::uint64_t seed = 1;
  std::size_t batch_size = 32;  // gradient accumulation window

  bool use_lx = true;
  bool use_lt = true;
  bool use_lz = true;
  bool alternate_across_batches = false;

  double split_train = 0.8;
  double split_dev = 0.1;
  double split_test = 0.1;
  std::uint64_t split_seed = 1;
};

/// Flat key=value text; '#' starts a comment. Unknown keys are errors.
TrainConfig parse_config(std::istream& in);
TrainConfig parse_config_file(const std::string& path);
void apply_config_entry(TrainConfig& cfg, const std::string& key,
                        const std::string& value);
std::string serialize_config(const TrainConfig& cfg);
std::string config_fingerprint(const TrainConfig& cfg);
void validate(const TrainConfig& cfg);

LatentSpec latent_spec(const TrainConfig& cfg);
IoLayout layout_for(Task task, std::size_t emb_dim, std::size_t tag_count,
                    const TrainConfig& cfg);
InnModel make_task_model(Task task, std::size_t emb_dim, std::size_t tag_count,
                         const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_y = 0.0;
  double loss_z = 0.0;
  double loss_x = 0.0;
  double loss_t = 0.0;
  double dev_metric = 0.0;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

std::string format_epoch(const EpochRecord& rec);

/// Decays the rate by `factor` once the monitored metric (higher is better)
/// has not improved for `patience` consecutive steps; the counter resets on
/// decay.
struct PlateauScheduler {
  PlateauScheduler(double lr, int patience, double factor);

  /// Feed one epoch's metric; returns the current learning rate.
  double step(double metric);
  double lr() const { return lr_; }

  double lr_;
  int patience_;
  double factor_;
  double best_;
  int bad_ = 0;
};

/// Single feed-forward net trained in the forward direction only.
struct BaselineModel {
  Task task = Task::kInflection;
  Mlp net;
};

struct TrainResult {
  InnModel model;
  TrainHistory history;
};

struct BaselineResult {
  BaselineModel model;
  TrainHistory history;
};

/// Owns one training run. Epochs can be driven one at a time so state can be
/// checkpointed and resumed mid-run; all per-epoch randomness is derived from
/// (seed, epoch), so a resumed run retraces the uninterrupted one exactly.
class InnTrainer {
 public:
  InnTrainer(Task task, InnModel model, std::vector<MorphRecord> train,
             std::vector<MorphRecord> dev, const EmbeddingTable& table,
             TagIndex tags, TrainConfig cfg);

  bool done() const;
  void run_one_epoch();
  void run(std::ostream* log = nullptr);

  const InnModel& current_model() const { return model_; }
  /// Parameters from the best dev epoch (the current ones when no dev set).
  const InnModel& best_model() const;
  const TrainHistory& history() const { return history_; }
  const TagIndex& tags() const { return tags_; }
  const TrainConfig& config() const { return cfg_; }
  Task task() const { return task_; }
  int completed_epochs() const { return epoch_; }

  void save_checkpoint(const std::string& path) const;
  static InnTrainer resume_checkpoint(const std::string& path,
                                      std::vector<MorphRecord> train,
                                      std::vector<MorphRecord> dev,
                                      const EmbeddingTable& table);

 private:
  InnTrainer(const EmbeddingTable& table);

  void prepare_vectors();
  double eval_dev_metric() const;
  void flush_window();
  void train_record(std::size_t idx, double tau_now, bool fwd_loss_on,
                    bool inv_loss_on, Rng& noise_rng);

  Task task_ = Task::kInflection;
  InnModel model_;
  std::vector<MorphRecord> train_;
  std::vector<MorphRecord> dev_;
  const EmbeddingTable* table_ = nullptr;
  TagIndex tags_;
  TrainConfig cfg_;

  std::vector<Vec> x_, y_;  // vectorized training records
  std::vector<Vec> dev_x_;
  std::vector<std::string> dev_gold_;

  InnGrads grads_;
  AdamState opt_;
  std::size_t window_fill_ = 0;

  int epoch_ = 0;
  PlateauScheduler sched_;
  double best_metric_;
  int best_epoch_ = -1;
  std::optional<InnModel> best_model_;
  TrainHistory history_;

  // scratch for the loss components of the epoch in flight
  double sum_y_ = 0, sum_z_ = 0, sum_x_ = 0, sum_t_ = 0, sum_total_ = 0;
  std::size_t cnt_y_ = 0, cnt_z_ = 0, cnt_x_ = 0, cnt_t_ = 0;
};

TrainResult train_inflection(InnModel model, const std::vector<MorphRecord>& train,
                             const std::vector<MorphRecord>& dev,
                             const EmbeddingTable& table, const TagIndex& tags,
                             const TrainConfig& cfg, std::ostream* log = nullptr);

TrainResult train_lemmatization(InnModel model,
                                const std::vector<MorphRecord>& train,
                                const std::vector<MorphRecord>& dev,
                                const EmbeddingTable& table,
                                const TagIndex& tags, const TrainConfig& cfg,
                                std::ostream* log = nullptr);

BaselineResult train_baseline(Task task, const std::vector<MorphRecord>& train,
                              const std::vector<MorphRecord>& dev,
                              const EmbeddingTable& table, const TagIndex& tags,
                              const TrainConfig& cfg, std::ostream* log = nullptr);

// -- checkpoint files --------------------------------------------------------

enum class ModelKind : std::uint8_t { kInn = 0, kBaseline = 1 };

void save_model(const InnModel& model, const TagIndex& tags,
                const std::string& config_text, const std::string& path);

struct LoadedModel {
  InnModel model;
  TagIndex tags;
  std::string config_text;
};

LoadedModel load_model(const std::string& path);

void save_baseline(const BaselineModel& model, const TagIndex& tags,
                   const std::string& config_text, const std::string& path);

struct LoadedBaseline {
  BaselineModel model;
  TagIndex tags;
  std::string config_text;
};

LoadedBaseline load_baseline(const std::string& path);

ModelKind peek_model_kind(const std::string& path);

/// Config text stored inside a trainer checkpoint, without loading the rest.
std::string peek_trainer_config(const std::string& path);

}  // namespace morphinn
