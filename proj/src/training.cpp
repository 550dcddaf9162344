#include "morphinn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace morphinn {

// -- config ------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::runtime_error("config: bad boolean for " + key + ": \"" + v + "\"");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream ss(v);
  T out;
  if (!(ss >> out)) throw std::runtime_error("config: bad value for " + key);
  std::string rest;
  if (ss >> rest) throw std::runtime_error("config: trailing data for " + key);
  return out;
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key,
                        const std::string& value) {
  if (key == "epochs") cfg.epochs = parse_num<int>(value, key);
  else if (key == "learning_rate") cfg.learning_rate = parse_num<double>(value, key);
  else if (key == "plateau_factor") cfg.plateau_factor = parse_num<double>(value, key);
  else if (key == "plateau_patience") cfg.plateau_patience = parse_num<int>(value, key);
  else if (key == "early_stop_patience") cfg.early_stop_patience = parse_num<int>(value, key);
  else if (key == "clip_norm") cfg.clip_norm = parse_num<double>(value, key);
  else if (key == "alpha_x") cfg.weights.alpha_x = parse_num<double>(value, key);
  else if (key == "alpha_t") cfg.weights.alpha_t = parse_num<double>(value, key);
  else if (key == "alpha_y") cfg.weights.alpha_y = parse_num<double>(value, key);
  else if (key == "alpha_z") cfg.weights.alpha_z = parse_num<double>(value, key);
  else if (key == "z_dim") cfg.z_dim = parse_num<std::size_t>(value, key);
  else if (key == "z_cat") cfg.z_cat = parse_num<std::size_t>(value, key);
  else if (key == "tau") cfg.tau = parse_num<double>(value, key);
  else if (key == "tau_anneal") cfg.tau_anneal = parse_bool(value, key);
  else if (key == "tau_end") cfg.tau_end = parse_num<double>(value, key);
  else if (key == "blocks") cfg.blocks = parse_num<std::size_t>(value, key);
  else if (key == "hidden") cfg.hidden = parse_num<std::size_t>(value, key);
  else if (key == "mlp_layers") cfg.mlp_layers = parse_num<std::size_t>(value, key);
  else if (key == "seed") cfg.seed = parse_num<std::uint64_t>(value, key);
  else if (key == "batch_size") cfg.batch_size = parse_num<std::size_t>(value, key);
  else if (key == "use_lx") cfg.use_lx = parse_bool(value, key);
  else if (key == "use_lt") cfg.use_lt = parse_bool(value, key);
  else if (key == "use_lz") cfg.use_lz = parse_bool(value, key);
  else if (key == "alternate_across_batches")
    cfg.alternate_across_batches = parse_bool(value, key);
  else if (key == "split_train") cfg.split_train = parse_num<double>(value, key);
  else if (key == "split_dev") cfg.split_dev = parse_num<double>(value, key);
  else if (key == "split_test") cfg.split_test = parse_num<double>(value, key);
  else if (key == "split_seed") cfg.split_seed = parse_num<std::uint64_t>(value, key);
  else throw std::runtime_error("config: unknown key \"" + key + "\"");
}

TrainConfig parse_config(std::istream& in) {
  TrainConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key = value");
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_config(in);
}

std::string serialize_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "epochs = " << cfg.epochs << '\n'
      << "learning_rate = " << cfg.learning_rate << '\n'
      << "plateau_factor = " << cfg.plateau_factor << '\n'
      << "plateau_patience = " << cfg.plateau_patience << '\n'
      << "early_stop_patience = " << cfg.early_stop_patience << '\n'
      << "clip_norm = " << cfg.clip_norm << '\n'
      << "alpha_x = " << cfg.weights.alpha_x << '\n'
      << "alpha_t = " << cfg.weights.alpha_t << '\n'
      << "alpha_y = " << cfg.weights.alpha_y << '\n'
      << "alpha_z = " << cfg.weights.alpha_z << '\n'
      << "z_dim = " << cfg.z_dim << '\n'
      << "z_cat = " << cfg.z_cat << '\n'
      << "tau = " << cfg.tau << '\n'
      << "tau_anneal = " << (cfg.tau_anneal ? 1 : 0) << '\n'
      << "tau_end = " << cfg.tau_end << '\n'
      << "blocks = " << cfg.blocks << '\n'
      << "hidden = " << cfg.hidden << '\n'
      << "mlp_layers = " << cfg.mlp_layers << '\n'
      << "seed = " << cfg.seed << '\n'
      << "batch_size = " << cfg.batch_size << '\n'
      << "use_lx = " << (cfg.use_lx ? 1 : 0) << '\n'
      << "use_lt = " << (cfg.use_lt ? 1 : 0) << '\n'
      << "use_lz = " << (cfg.use_lz ? 1 : 0) << '\n'
      << "alternate_across_batches = " << (cfg.alternate_across_batches ? 1 : 0) << '\n'
      << "split_train = " << cfg.split_train << '\n'
      << "split_dev = " << cfg.split_dev << '\n'
      << "split_test = " << cfg.split_test << '\n'
      << "split_seed = " << cfg.split_seed << '\n';
  return out.str();
}

std::string config_fingerprint(const TrainConfig& cfg) {
  const std::string text = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("config: learning_rate must be positive");
  if (!(cfg.plateau_factor > 0 && cfg.plateau_factor < 1))
    throw std::invalid_argument("config: plateau_factor must be in (0, 1)");
  if (cfg.plateau_patience < 1) throw std::invalid_argument("config: plateau_patience must be >= 1");
  if (cfg.early_stop_patience < 1) throw std::invalid_argument("config: early_stop_patience must be >= 1");
  if (!(cfg.clip_norm > 0)) throw std::invalid_argument("config: clip_norm must be positive");
  const auto& w = cfg.weights;
  if (w.alpha_x < 0 || w.alpha_t < 0 || w.alpha_y < 0 || w.alpha_z < 0)
    throw std::invalid_argument("config: loss weights must be >= 0");
  if (cfg.z_dim > 0 && cfg.z_cat < 2)
    throw std::invalid_argument("config: z_cat must be >= 2 when z_dim > 0");
  if (!(cfg.tau > 0)) throw std::invalid_argument("config: tau must be positive");
  if (cfg.tau_anneal && !(cfg.tau_end > 0))
    throw std::invalid_argument("config: tau_end must be positive");
  if (cfg.blocks < 1) throw std::invalid_argument("config: blocks must be >= 1");
  if (cfg.hidden < 1) throw std::invalid_argument("config: hidden must be >= 1");
  if (cfg.mlp_layers < 1) throw std::invalid_argument("config: mlp_layers must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (!(cfg.split_train > 0 && cfg.split_dev > 0 && cfg.split_test > 0))
    throw std::invalid_argument("config: split ratios must be positive");
  if (std::abs(cfg.split_train + cfg.split_dev + cfg.split_test - 1.0) > 1e-9)
    throw std::invalid_argument("config: split ratios must sum to 1");
}

LatentSpec latent_spec(const TrainConfig& cfg) {
  return LatentSpec{cfg.z_dim, cfg.z_cat, cfg.tau};
}

IoLayout layout_for(Task task, std::size_t emb_dim, std::size_t tag_count,
                    const TrainConfig& cfg) {
  IoLayout layout;
  layout.task = task;
  layout.z_dim = cfg.z_dim;
  layout.z_cat = cfg.z_dim == 0 ? 0 : cfg.z_cat;
  if (task == Task::kInflection) {
    layout.x_dim = emb_dim + tag_count;
    layout.y_dim = emb_dim;
    layout.tag_count = tag_count;
  } else {
    layout.x_dim = emb_dim;
    layout.y_dim = emb_dim;
    layout.tag_count = 0;
  }
  return layout;
}

InnModel make_task_model(Task task, std::size_t emb_dim, std::size_t tag_count,
                         const TrainConfig& cfg) {
  InnConfig inn;
  inn.n_blocks = cfg.blocks;
  inn.hidden = cfg.hidden;
  inn.n_layers = cfg.mlp_layers;
  inn.init = WeightInit::kOrthogonal;
  return make_inn_model(layout_for(task, emb_dim, tag_count, cfg), inn, cfg.seed);
}

std::string format_epoch(const EpochRecord& rec) {
  std::ostringstream out;
  out.precision(6);
  out << "epoch=" << rec.epoch << " loss=" << rec.loss_total
      << " ly=" << rec.loss_y << " lx=" << rec.loss_x << " lt=" << rec.loss_t
      << " lz=" << rec.loss_z << " dev_em=" << rec.dev_metric
      << " lr=" << rec.learning_rate;
  return out.str();
}

// -- plateau scheduler ---------------------------------------------------------

PlateauScheduler::PlateauScheduler(double lr, int patience, double factor)
    : lr_(lr),
      patience_(patience),
      factor_(factor),
      best_(-std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw std::invalid_argument("plateau: patience must be >= 1");
  if (!(factor > 0 && factor < 1))
    throw std::invalid_argument("plateau: factor must be in (0, 1)");
}

double PlateauScheduler::step(double metric) {
  if (metric > best_ + 1e-12) {
    best_ = metric;
    bad_ = 0;
  } else {
    ++bad_;
  }
  if (bad_ >= patience_) {
    lr_ *= factor_;
    bad_ = 0;
  }
  return lr_;
}

// -- trainer -------------------------------------------------------------------

InnTrainer::InnTrainer(Task task, InnModel model, std::vector<MorphRecord> train,
                       std::vector<MorphRecord> dev, const EmbeddingTable& table,
                       TagIndex tags, TrainConfig cfg)
    : task_(task),
      model_(std::move(model)),
      train_(std::move(train)),
      dev_(std::move(dev)),
      table_(&table),
      tags_(std::move(tags)),
      cfg_(std::move(cfg)),
      grads_(make_grads(model_)),
      opt_(make_adam(param_sizes(model_), cfg_.learning_rate)),
      sched_(cfg_.learning_rate, cfg_.plateau_patience, cfg_.plateau_factor),
      best_metric_(-std::numeric_limits<double>::infinity()) {
  validate(cfg_);
  if (model_.layout.task != task_)
    throw std::invalid_argument("trainer: model layout built for a different task");
  prepare_vectors();
}

InnTrainer::InnTrainer(const EmbeddingTable& table)
    : table_(&table),
      sched_(1e-3, 1, 0.5),
      best_metric_(-std::numeric_limits<double>::infinity()) {}

void InnTrainer::prepare_vectors() {
  const std::size_t emb = table_->dim();
  const IoLayout& layout = model_.layout;
  if (task_ == Task::kInflection) {
    if (layout.x_dim != emb + tags_.size() || layout.y_dim != emb)
      throw std::invalid_argument(
          "trainer: model layout does not match the embedding dim / tag count");
  } else {
    if (layout.x_dim != emb || layout.y_dim != emb)
      throw std::invalid_argument("trainer: model layout does not match embeddings");
  }

  x_.clear();
  y_.clear();
  x_.reserve(train_.size());
  y_.reserve(train_.size());
  for (const auto& rec : train_) {
    const Vec lemma_v = compose_word_vector(rec.lemma, *table_);
    const Vec surface_v = compose_word_vector(rec.surface, *table_);
    if (task_ == Task::kInflection) {
      Vec x = lemma_v;
      const Vec t = tag_vector(rec.tags, tags_);
      x.insert(x.end(), t.begin(), t.end());
      x_.push_back(std::move(x));
      y_.push_back(surface_v);
    } else {
      x_.push_back(surface_v);
      y_.push_back(lemma_v);
    }
  }

  dev_x_.clear();
  dev_gold_.clear();
  for (const auto& rec : dev_) {
    if (task_ == Task::kInflection) {
      Vec x = compose_word_vector(rec.lemma, *table_);
      const Vec t = tag_vector(rec.tags, tags_);
      x.insert(x.end(), t.begin(), t.end());
      dev_x_.push_back(std::move(x));
      dev_gold_.push_back(rec.surface);
    } else {
      dev_x_.push_back(compose_word_vector(rec.surface, *table_));
      dev_gold_.push_back(rec.lemma);
    }
  }
}

double InnTrainer::eval_dev_metric() const {
  if (dev_x_.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dev_x_.size(); ++i) {
    const InnForward f = inn_forward(model_, dev_x_[i]);
    const auto nn = nearest_word(f.y, *table_, 1);
    if (nn.front().token == dev_gold_[i]) ++hits;
  }
  return 100.0 * double(hits) / double(dev_x_.size());
}

void InnTrainer::flush_window() {
  if (window_fill_ == 0) return;
  scale_grads(grads_, 1.0 / double(window_fill_));
  clip_gradients(grad_spans(grads_), cfg_.clip_norm);
  adam_step(bind_params(model_, grads_), opt_);
  zero_grads(grads_);
  window_fill_ = 0;
}

void InnTrainer::train_record(std::size_t idx, double tau_now, bool fwd_loss_on,
                              bool inv_loss_on, Rng& noise_rng) {
  const Vec& x = x_[idx];
  const Vec& y = y_[idx];
  const IoLayout& layout = model_.layout;
  const std::size_t zlen = layout.z_len();
  const std::size_t emb = table_->dim();
  const LossWeights& w = cfg_.weights;

  InnForwardCache fcache;
  const InnForward f = inn_forward(model_, x, &fcache);

  double ly = 0, lz = 0, lx = 0, lt = 0;
  Vec uy(layout.y_dim, 0.0);
  Vec uz(zlen, 0.0);
  bool fwd_has_grad = false;

  if (fwd_loss_on) {
    const LossResult cy = cosine_loss(f.y, y);
    ly = cy.loss;
    for (std::size_t i = 0; i < uy.size(); ++i) uy[i] = w.alpha_y * cy.grad[i];
    sum_y_ += ly;
    ++cnt_y_;
    fwd_has_grad = true;
    if (cfg_.use_lz && zlen > 0) {
      const KlResult kl =
          kl_to_uniform_logits(f.z_logits, LatentSpec{layout.z_dim, layout.z_cat, 1.0});
      lz = kl.loss;
      for (std::size_t i = 0; i < zlen; ++i) uz[i] += w.alpha_z * kl.grad[i];
      sum_z_ += lz;
      ++cnt_z_;
    }
  }

  const bool tags_active = task_ == Task::kInflection && layout.tag_count > 0;
  const bool want_inverse = inv_loss_on && (cfg_.use_lx || (cfg_.use_lt && tags_active));
  if (want_inverse) {
    GumbelCache gcache;
    Vec z;
    if (zlen > 0) {
      const LatentSpec sp{layout.z_dim, layout.z_cat, tau_now};
      z = gumbel_softmax_with_noise(f.z_logits, gumbel_noise(zlen, noise_rng), sp,
                                    &gcache);
    }
    InnInverseCache icache;
    // teacher forcing: the inverse pass reads the gold y with the sampled z
    const Vec xr = inn_inverse(model_, y, z, &icache);

    Vec ux(layout.x_dim, 0.0);
    if (task_ == Task::kInflection) {
      if (cfg_.use_lx) {
        const Vec pred(xr.begin(), xr.begin() + emb);
        const Vec gold(x.begin(), x.begin() + emb);
        const LossResult cl = cosine_loss(pred, gold);
        lx = cl.loss;
        for (std::size_t i = 0; i < emb; ++i) ux[i] = w.alpha_x * cl.grad[i];
        sum_x_ += lx;
        ++cnt_x_;
      }
      if (cfg_.use_lt && tags_active) {
        const Vec pred(xr.begin() + emb, xr.end());
        const Vec gold(x.begin() + emb, x.end());
        const LossResult bl = bce_tag_loss_logits(pred, gold);
        lt = bl.loss;
        for (std::size_t i = 0; i < layout.tag_count; ++i)
          ux[emb + i] = w.alpha_t * bl.grad[i];
        sum_t_ += lt;
        ++cnt_t_;
      }
    } else if (cfg_.use_lx) {
      const LossResult cl = cosine_loss(xr, x);
      lx = cl.loss;
      for (std::size_t i = 0; i < ux.size(); ++i) ux[i] = w.alpha_x * cl.grad[i];
      sum_x_ += lx;
      ++cnt_x_;
    }

    const YzGrad yz = inn_inverse_backward(model_, icache, ux, grads_);
    // yz.y is dropped: the gold y is a leaf. The z path chains through the
    // reparameterized sample back into the forward pass.
    if (zlen > 0) {
      const Vec gz = gumbel_softmax_backward(gcache, yz.z);
      for (std::size_t i = 0; i < zlen; ++i) uz[i] += gz[i];
      fwd_has_grad = true;
    }
  }

  if (fwd_has_grad) inn_forward_backward(model_, fcache, uy, uz, grads_);

  const double total =
      task_ == Task::kInflection
          ? composite_inflection_loss(lx, lt, ly, lz, w)
          : composite_lemmatization_loss(lx, ly, lz, w);
  if (!std::isfinite(total))
    throw std::runtime_error("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch_) + ", record " +
                             std::to_string(idx));
  sum_total_ += total;

  ++window_fill_;
  if (window_fill_ >= cfg_.batch_size) flush_window();
}

bool InnTrainer::done() const {
  if (epoch_ >= cfg_.epochs) return true;
  if (!dev_.empty() && best_epoch_ >= 0 &&
      epoch_ - best_epoch_ > cfg_.early_stop_patience)
    return true;
  return false;
}

void InnTrainer::run_one_epoch() {
  if (done()) return;
  const int e = epoch_;

  Rng shuffle_rng(mix_seed(cfg_.seed, 1000 + std::uint64_t(e)));
  Rng noise_rng(mix_seed(cfg_.seed, 2000 + std::uint64_t(e)));
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  double tau_now = cfg_.tau;
  if (cfg_.tau_anneal && cfg_.epochs > 1)
    tau_now = cfg_.tau + (cfg_.tau_end - cfg_.tau) * double(e) / double(cfg_.epochs - 1);

  sum_y_ = sum_z_ = sum_x_ = sum_t_ = sum_total_ = 0.0;
  cnt_y_ = cnt_z_ = cnt_x_ = cnt_t_ = 0;

  std::size_t step = 0;
  for (std::size_t idx : order) {
    bool fwd_on = true, inv_on = true;
    if (cfg_.alternate_across_batches) {
      const bool even = ((step / cfg_.batch_size) % 2) == 0;
      fwd_on = even;
      inv_on = !even;
    }
    train_record(idx, tau_now, fwd_on, inv_on, noise_rng);
    ++step;
  }
  flush_window();

  EpochRecord rec;
  rec.epoch = e;
  rec.loss_y = cnt_y_ ? sum_y_ / double(cnt_y_) : 0.0;
  rec.loss_z = cnt_z_ ? sum_z_ / double(cnt_z_) : 0.0;
  rec.loss_x = cnt_x_ ? sum_x_ / double(cnt_x_) : 0.0;
  rec.loss_t = cnt_t_ ? sum_t_ / double(cnt_t_) : 0.0;
  rec.loss_total = train_.empty() ? 0.0 : sum_total_ / double(train_.size());
  rec.learning_rate = opt_.learning_rate;
  rec.dev_metric = eval_dev_metric();
  history_.epochs.push_back(rec);
  ++epoch_;

  if (!dev_.empty()) {
    if (best_epoch_ < 0 || rec.dev_metric > best_metric_ + 1e-12) {
      best_metric_ = rec.dev_metric;
      best_epoch_ = e;
      best_model_ = model_;
    }
    opt_.learning_rate = sched_.step(rec.dev_metric);
  }
}

void InnTrainer::run(std::ostream* log) {
  while (!done()) {
    run_one_epoch();
    if (log) *log << format_epoch(history_.epochs.back()) << '\n';
  }
}

const InnModel& InnTrainer::best_model() const {
  return best_model_ ? *best_model_ : model_;
}

TrainResult train_inflection(InnModel model, const std::vector<MorphRecord>& train,
                             const std::vector<MorphRecord>& dev,
                             const EmbeddingTable& table, const TagIndex& tags,
                             const TrainConfig& cfg, std::ostream* log) {
  InnTrainer trainer(Task::kInflection, std::move(model), train, dev, table, tags, cfg);
  trainer.run(log);
  return {trainer.best_model(), trainer.history()};
}

TrainResult train_lemmatization(InnModel model,
                                const std::vector<MorphRecord>& train,
                                const std::vector<MorphRecord>& dev,
                                const EmbeddingTable& table, const TagIndex& tags,
                                const TrainConfig& cfg, std::ostream* log) {
  InnTrainer trainer(Task::kLemmatization, std::move(model), train, dev, table, tags, cfg);
  trainer.run(log);
  return {trainer.best_model(), trainer.history()};
}

// -- baseline ------------------------------------------------------------------

BaselineResult train_baseline(Task task, const std::vector<MorphRecord>& train,
                              const std::vector<MorphRecord>& dev,
                              const EmbeddingTable& table, const TagIndex& tags,
                              const TrainConfig& cfg, std::ostream* log) {
  validate(cfg);
  const std::size_t emb = table.dim();
  const std::size_t in_dim = task == Task::kInflection ? emb + tags.size() : emb;

  Rng init_rng(mix_seed(cfg.seed, 0x62617365ULL));
  BaselineModel model;
  model.task = task;
  model.net = make_mlp(in_dim, emb, cfg.hidden, cfg.mlp_layers,
                       WeightInit::kOrthogonal, init_rng);

  std::vector<Vec> xs, ys, dev_x;
  std::vector<std::string> dev_gold;
  for (const auto& rec : train) {
    const Vec lemma_v = compose_word_vector(rec.lemma, table);
    const Vec surface_v = compose_word_vector(rec.surface, table);
    if (task == Task::kInflection) {
      Vec x = lemma_v;
      const Vec t = tag_vector(rec.tags, tags);
      x.insert(x.end(), t.begin(), t.end());
      xs.push_back(std::move(x));
      ys.push_back(surface_v);
    } else {
      xs.push_back(surface_v);
      ys.push_back(lemma_v);
    }
  }
  for (const auto& rec : dev) {
    if (task == Task::kInflection) {
      Vec x = compose_word_vector(rec.lemma, table);
      const Vec t = tag_vector(rec.tags, tags);
      x.insert(x.end(), t.begin(), t.end());
      dev_x.push_back(std::move(x));
      dev_gold.push_back(rec.surface);
    } else {
      dev_x.push_back(compose_word_vector(rec.surface, table));
      dev_gold.push_back(rec.lemma);
    }
  }

  MlpGrads grads = make_grads(model.net);
  AdamState opt = make_adam(param_sizes(model.net), cfg.learning_rate);
  PlateauScheduler sched(cfg.learning_rate, cfg.plateau_patience, cfg.plateau_factor);
  TrainHistory history;
  double best_metric = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::optional<Mlp> best_net;

  auto dev_metric = [&]() {
    if (dev_x.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < dev_x.size(); ++i) {
      const Vec pred = mlp_forward(model.net, dev_x[i]);
      if (nearest_word(pred, table, 1).front().token == dev_gold[i]) ++hits;
    }
    return 100.0 * double(hits) / double(dev_x.size());
  };

  for (int e = 0; e < cfg.epochs; ++e) {
    if (!dev.empty() && best_epoch >= 0 && e - best_epoch > cfg.early_stop_patience)
      break;
    Rng shuffle_rng(mix_seed(cfg.seed, 1000 + std::uint64_t(e)));
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double sum_loss = 0.0;
    std::size_t window = 0;
    auto flush = [&]() {
      if (window == 0) return;
      for (auto g : grad_spans(grads))
        for (double& v : g) v /= double(window);
      clip_gradients(grad_spans(grads), cfg.clip_norm);
      adam_step(bind_params(model.net, grads, "baseline"), opt);
      zero_grads(grads);
      window = 0;
    };
    for (std::size_t idx : order) {
      MlpCache cache;
      const Vec pred = mlp_forward(model.net, xs[idx], &cache);
      const LossResult cl = cosine_loss(pred, ys[idx]);
      if (!std::isfinite(cl.loss))
        throw std::runtime_error("baseline diverged: non-finite loss at epoch " +
                                 std::to_string(e));
      Vec up(cl.grad.size());
      for (std::size_t i = 0; i < up.size(); ++i)
        up[i] = cfg.weights.alpha_y * cl.grad[i];
      mlp_backward(model.net, cache, up, grads);
      sum_loss += cl.loss;
      if (++window >= cfg.batch_size) flush();
    }
    flush();

    EpochRecord rec;
    rec.epoch = e;
    rec.loss_y = xs.empty() ? 0.0 : sum_loss / double(xs.size());
    rec.loss_total = cfg.weights.alpha_y * rec.loss_y;
    rec.learning_rate = opt.learning_rate;
    rec.dev_metric = dev_metric();
    history.epochs.push_back(rec);
    if (log) *log << format_epoch(rec) << '\n';

    if (!dev.empty()) {
      if (best_epoch < 0 || rec.dev_metric > best_metric + 1e-12) {
        best_metric = rec.dev_metric;
        best_epoch = e;
        best_net = model.net;
      }
      opt.learning_rate = sched.step(rec.dev_metric);
    }
  }
  if (best_net) model.net = std::move(*best_net);
  return {std::move(model), std::move(history)};
}

// -- binary checkpoints ----------------------------------------------------------

namespace {

constexpr char kModelMagic[8] = {'M', 'I', 'N', 'N', 'M', 'D', 'L', '1'};
constexpr char kTrainerMagic[8] = {'M', 'I', 'N', 'N', 'T', 'R', 'N', '1'};

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write file: " + path);
  }
  void magic(const char (&m)[8]) { out_.write(m, 8); }
  void u8(std::uint8_t v) { out_.put(char(v)); }
  void u64(std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = char((v >> (8 * i)) & 0xff);
    out_.write(buf, 8);
  }
  void i64(std::int64_t v) { u64(std::uint64_t(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), std::streamsize(s.size()));
  }
  void vec(const Vec& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void close(const std::string& path) {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + path);
  }

 private:
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open file: " + path);
  }
  void magic(const char (&m)[8]) {
    char buf[8];
    read(buf, 8);
    if (std::memcmp(buf, m, 8) != 0)
      throw std::runtime_error(path_ + ": not a recognized checkpoint file");
  }
  std::uint8_t u8() {
    char c;
    read(&c, 1);
    return std::uint8_t(c);
  }
  std::uint64_t u64() {
    char buf[8];
    read(buf, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[i])) << (8 * i);
    return v;
  }
  std::int64_t i64() { return std::int64_t(u64()); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint64_t n = checked_count(u64());
    std::string s(n, '\0');
    read(s.data(), std::streamsize(n));
    return s;
  }
  Vec vec() {
    const std::uint64_t n = checked_count(u64());
    Vec v(n);
    for (auto& x : v) x = f64();
    return v;
  }

 private:
  std::uint64_t checked_count(std::uint64_t n) {
    if (n > (1ULL << 32))
      throw std::runtime_error(path_ + ": corrupt checkpoint (absurd count)");
    return n;
  }
  void read(char* buf, std::streamsize n) {
    in_.read(buf, n);
    if (in_.gcount() != n)
      throw std::runtime_error(path_ + ": truncated or corrupt checkpoint");
  }
  std::ifstream in_;
  std::string path_;
};

void write_mlp(BinWriter& w, const Mlp& net) {
  w.u64(net.layers.size());
  for (const auto& layer : net.layers) {
    w.u64(layer.w.rows);
    w.u64(layer.w.cols);
    w.u8(std::uint8_t(layer.act));
    for (double x : layer.w.v) w.f64(x);
    w.vec(layer.b);
  }
}

Mlp read_mlp(BinReader& r) {
  Mlp net;
  const std::uint64_t n = r.u64();
  net.layers.resize(n);
  for (auto& layer : net.layers) {
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    layer.act = Act(r.u8());
    layer.w = Mat(rows, cols);
    for (auto& x : layer.w.v) x = r.f64();
    layer.b = r.vec();
    if (layer.b.size() != rows)
      throw std::runtime_error("checkpoint: bias length does not match layer rows");
  }
  return net;
}

void write_inn(BinWriter& w, const InnModel& model) {
  w.u8(std::uint8_t(model.layout.task));
  w.u64(model.layout.x_dim);
  w.u64(model.layout.y_dim);
  w.u64(model.layout.z_dim);
  w.u64(model.layout.z_cat);
  w.u64(model.layout.tag_count);
  w.u64(model.width);
  w.u64(model.blocks.size());
  for (const auto& b : model.blocks) {
    w.u64(b.split_point);
    w.u64(b.width);
    write_mlp(w, b.s1);
    write_mlp(w, b.s2);
    write_mlp(w, b.t1);
    write_mlp(w, b.t2);
  }
  w.u64(model.perms.size());
  for (const auto& p : model.perms) {
    w.u64(p.forward_index.size());
    for (std::size_t i : p.forward_index) w.u64(i);
  }
}

InnModel read_inn(BinReader& r) {
  InnModel model;
  model.layout.task = Task(r.u8());
  model.layout.x_dim = r.u64();
  model.layout.y_dim = r.u64();
  model.layout.z_dim = r.u64();
  model.layout.z_cat = r.u64();
  model.layout.tag_count = r.u64();
  model.width = r.u64();
  const std::uint64_t nb = r.u64();
  model.blocks.resize(nb);
  for (auto& b : model.blocks) {
    b.split_point = r.u64();
    b.width = r.u64();
    b.s1 = read_mlp(r);
    b.s2 = read_mlp(r);
    b.t1 = read_mlp(r);
    b.t2 = read_mlp(r);
  }
  const std::uint64_t np = r.u64();
  model.perms.resize(np);
  for (auto& p : model.perms) {
    const std::uint64_t width = r.u64();
    p.forward_index.resize(width);
    for (auto& i : p.forward_index) i = r.u64();
  }
  if (model.perms.size() + 1 != model.blocks.size())
    throw std::runtime_error("checkpoint: block/permutation counts inconsistent");
  return model;
}

void write_tags(BinWriter& w, const TagIndex& tags) {
  w.u64(tags.names.size());
  for (const auto& name : tags.names) w.str(name);
}

TagIndex read_tags(BinReader& r) {
  TagIndex tags;
  const std::uint64_t n = r.u64();
  tags.names.resize(n);
  for (auto& name : tags.names) name = r.str();
  for (std::size_t i = 0; i < tags.names.size(); ++i)
    tags.index.emplace(tags.names[i], i);
  return tags;
}

void write_adam(BinWriter& w, const AdamState& st) {
  w.f64(st.learning_rate);
  w.f64(st.beta1);
  w.f64(st.beta2);
  w.f64(st.eps);
  w.i64(st.step);
  w.u64(st.m.size());
  for (const auto& v : st.m) w.vec(v);
  for (const auto& v : st.v) w.vec(v);
}

AdamState read_adam(BinReader& r) {
  AdamState st;
  st.learning_rate = r.f64();
  st.beta1 = r.f64();
  st.beta2 = r.f64();
  st.eps = r.f64();
  st.step = long(r.i64());
  const std::uint64_t n = r.u64();
  st.m.resize(n);
  st.v.resize(n);
  for (auto& v : st.m) v = r.vec();
  for (auto& v : st.v) v = r.vec();
  return st;
}

}  // namespace

void save_model(const InnModel& model, const TagIndex& tags,
                const std::string& config_text, const std::string& path) {
  BinWriter w(path);
  w.magic(kModelMagic);
  w.u8(std::uint8_t(ModelKind::kInn));
  w.str(config_text);
  write_tags(w, tags);
  write_inn(w, model);
  w.close(path);
}

LoadedModel load_model(const std::string& path) {
  BinReader r(path);
  r.magic(kModelMagic);
  if (ModelKind(r.u8()) != ModelKind::kInn)
    throw std::runtime_error(path + ": not an invertible-model checkpoint");
  LoadedModel out;
  out.config_text = r.str();
  out.tags = read_tags(r);
  out.model = read_inn(r);
  return out;
}

void save_baseline(const BaselineModel& model, const TagIndex& tags,
                   const std::string& config_text, const std::string& path) {
  BinWriter w(path);
  w.magic(kModelMagic);
  w.u8(std::uint8_t(ModelKind::kBaseline));
  w.str(config_text);
  write_tags(w, tags);
  w.u8(std::uint8_t(model.task));
  write_mlp(w, model.net);
  w.close(path);
}

LoadedBaseline load_baseline(const std::string& path) {
  BinReader r(path);
  r.magic(kModelMagic);
  if (ModelKind(r.u8()) != ModelKind::kBaseline)
    throw std::runtime_error(path + ": not a baseline checkpoint");
  LoadedBaseline out;
  out.config_text = r.str();
  out.tags = read_tags(r);
  out.model.task = Task(r.u8());
  out.model.net = read_mlp(r);
  return out;
}

ModelKind peek_model_kind(const std::string& path) {
  BinReader r(path);
  r.magic(kModelMagic);
  return ModelKind(r.u8());
}

std::string peek_trainer_config(const std::string& path) {
  BinReader r(path);
  r.magic(kTrainerMagic);
  return r.str();
}

void InnTrainer::save_checkpoint(const std::string& path) const {
  BinWriter w(path);
  w.magic(kTrainerMagic);
  w.str(serialize_config(cfg_));
  w.u8(std::uint8_t(task_));
  write_tags(w, tags_);
  w.i64(epoch_);
  w.f64(sched_.lr_);
  w.f64(sched_.best_);
  w.i64(sched_.bad_);
  w.f64(best_metric_);
  w.i64(best_epoch_);
  write_adam(w, opt_);
  write_inn(w, model_);
  w.u8(best_model_ ? 1 : 0);
  if (best_model_) write_inn(w, *best_model_);
  w.u64(history_.epochs.size());
  for (const auto& rec : history_.epochs) {
    w.i64(rec.epoch);
    w.f64(rec.loss_total);
    w.f64(rec.loss_y);
    w.f64(rec.loss_z);
    w.f64(rec.loss_x);
    w.f64(rec.loss_t);
    w.f64(rec.dev_metric);
    w.f64(rec.learning_rate);
  }
  w.close(path);
}

InnTrainer InnTrainer::resume_checkpoint(const std::string& path,
                                         std::vector<MorphRecord> train,
                                         std::vector<MorphRecord> dev,
                                         const EmbeddingTable& table) {
  BinReader r(path);
  r.magic(kTrainerMagic);

  InnTrainer t(table);
  std::istringstream cfg_text(r.str());
  t.cfg_ = parse_config(cfg_text);
  t.task_ = Task(r.u8());
  t.tags_ = read_tags(r);
  t.epoch_ = int(r.i64());
  t.sched_ = PlateauScheduler(t.cfg_.learning_rate, t.cfg_.plateau_patience,
                              t.cfg_.plateau_factor);
  t.sched_.lr_ = r.f64();
  t.sched_.best_ = r.f64();
  t.sched_.bad_ = int(r.i64());
  t.best_metric_ = r.f64();
  t.best_epoch_ = int(r.i64());
  t.opt_ = read_adam(r);
  t.model_ = read_inn(r);
  if (r.u8()) t.best_model_ = read_inn(r);
  const std::uint64_t n = r.u64();
  t.history_.epochs.resize(n);
  for (auto& rec : t.history_.epochs) {
    rec.epoch = int(r.i64());
    rec.loss_total = r.f64();
    rec.loss_y = r.f64();
    rec.loss_z = r.f64();
    rec.loss_x = r.f64();
    rec.loss_t = r.f64();
    rec.dev_metric = r.f64();
    rec.learning_rate = r.f64();
  }

  t.train_ = std::move(train);
  t.dev_ = std::move(dev);
  t.grads_ = make_grads(t.model_);
  t.prepare_vectors();
  return t;
}

}  // namespace morphinn
