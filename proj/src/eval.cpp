#include "morphinn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace morphinn {

double exact_match(const std::vector<std::string>& predictions,
                   const std::vector<std::string>& golds) {
  if (predictions.size() != golds.size())
    throw std::invalid_argument("exact_match: length mismatch");
  if (predictions.empty())
    throw std::invalid_argument("exact_match: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == golds[i]) ++hits;
  return 100.0 * double(hits) / double(predictions.size());
}

double tag_f1(const std::vector<std::set<std::string>>& pred_sets,
              const std::vector<std::set<std::string>>& gold_sets) {
  if (pred_sets.size() != gold_sets.size())
    throw std::invalid_argument("tag_f1: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred_sets.size(); ++i) {
    for (const auto& tag : pred_sets[i]) {
      if (gold_sets[i].count(tag)) ++tp;
      else ++fp;
    }
    for (const auto& tag : gold_sets[i])
      if (!pred_sets[i].count(tag)) ++fn;
  }
  if (tp + fp + fn == 0) return 100.0;
  return 100.0 * 2.0 * double(tp) / double(2 * tp + fp + fn);
}

double tag_f1_macro(const std::vector<std::set<std::string>>& pred_sets,
                    const std::vector<std::set<std::string>>& gold_sets) {
  if (pred_sets.size() != gold_sets.size())
    throw std::invalid_argument("tag_f1_macro: length mismatch");
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<std::string, Counts> per_tag;
  for (std::size_t i = 0; i < pred_sets.size(); ++i) {
    for (const auto& tag : pred_sets[i]) {
      if (gold_sets[i].count(tag)) ++per_tag[tag].tp;
      else ++per_tag[tag].fp;
    }
    for (const auto& tag : gold_sets[i])
      if (!pred_sets[i].count(tag)) ++per_tag[tag].fn;
  }
  if (per_tag.empty()) return 100.0;
  double sum = 0.0;
  for (const auto& [tag, c] : per_tag)
    sum += c.tp + c.fp + c.fn == 0
               ? 1.0
               : 2.0 * double(c.tp) / double(2 * c.tp + c.fp + c.fn);
  return 100.0 * sum / double(per_tag.size());
}

std::string predict_inflection(const InnModel& model, const std::string& lemma,
                               const std::set<std::string>& tags,
                               const EmbeddingTable& table, const TagIndex& index) {
  if (model.layout.task != Task::kInflection)
    throw std::invalid_argument("predict_inflection: model trained for another task");
  Vec x = compose_word_vector(lemma, table);
  const Vec t = tag_vector(tags, index);
  x.insert(x.end(), t.begin(), t.end());
  const InnForward f = inn_forward(model, x);
  return nearest_word(f.y, table, 1).front().token;
}

Analysis predict_analysis(const InnModel& model, const std::string& surface,
                          const EmbeddingTable& table, const TagIndex& index,
                          ZMode mode, double tau, Rng* rng) {
  if (model.layout.task != Task::kInflection)
    throw std::invalid_argument("predict_analysis: model trained for another task");
  const Vec y = compose_word_vector(surface, table);
  const std::size_t zlen = model.layout.z_len();

  Vec x_rec;
  if (zlen == 0) {
    x_rec = inn_inverse(model, y, {});
  } else {
    const LatentSpec spec{model.layout.z_dim, model.layout.z_cat,
                          tau > 0 ? tau : 1.0};
    if (mode == ZMode::kHardened) {
      // bootstrap: invert at the prior mean, read the model's own z logits
      // off the forward pass of that reconstruction, then invert again with
      // the hardened one-hot z.
      const Vec x0 = inn_inverse(model, y, uniform_probs(spec));
      const InnForward f0 = inn_forward(model, x0);
      x_rec = inn_inverse(model, y, harden(f0.z_logits, spec));
    } else {
      if (!rng)
        throw std::invalid_argument("predict_analysis: sampled mode needs an rng");
      const Vec z = gumbel_softmax_sample(Vec(zlen, 0.0), spec, *rng);
      x_rec = inn_inverse(model, y, z);
    }
  }

  const std::size_t emb = table.dim();
  Analysis out;
  out.lemma =
      nearest_word(Vec(x_rec.begin(), x_rec.begin() + emb), table, 1).front().token;
  for (std::size_t i = 0; i < model.layout.tag_count; ++i)
    if (x_rec[emb + i] > 0.0)  // sigmoid(v) > 0.5 iff v > 0
      out.tags.insert(index.names[i]);
  return out;
}

std::string predict_lemma(const InnModel& model, const std::string& surface,
                          const EmbeddingTable& table) {
  if (model.layout.task != Task::kLemmatization)
    throw std::invalid_argument("predict_lemma: model trained for another task");
  const InnForward f = inn_forward(model, compose_word_vector(surface, table));
  return nearest_word(f.y, table, 1).front().token;
}

std::vector<std::string> sample_surfaces(const InnModel& model,
                                         const std::string& lemma, std::size_t n,
                                         double tau, Rng& rng,
                                         const EmbeddingTable& table,
                                         const Vec& logits) {
  if (model.layout.task != Task::kLemmatization)
    throw std::invalid_argument("sample_surfaces: model trained for another task");
  const Vec y = compose_word_vector(lemma, table);
  const std::size_t zlen = model.layout.z_len();

  std::vector<std::string> out;
  out.reserve(n);
  if (zlen == 0) {
    const Vec x = inn_inverse(model, y, {});
    const std::string token = nearest_word(x, table, 1).front().token;
    out.assign(n, token);
    return out;
  }

  const LatentSpec spec{model.layout.z_dim, model.layout.z_cat, tau};
  validate(spec);
  Vec prior = logits.empty() ? Vec(zlen, 0.0) : logits;
  if (prior.size() != zlen)
    throw std::invalid_argument("sample_surfaces: logits length must be d*cat");
  for (std::size_t i = 0; i < n; ++i) {
    const Vec z = gumbel_softmax_sample(prior, spec, rng);
    const Vec x = inn_inverse(model, y, z);
    out.push_back(nearest_word(x, table, 1).front().token);
  }
  return out;
}

std::size_t distinct_count(const std::vector<std::string>& words) {
  return std::unordered_set<std::string>(words.begin(), words.end()).size();
}

EvalReport evaluate_inn(const InnModel& model, const std::vector<MorphRecord>& records,
                        const EmbeddingTable& table, const TagIndex& index) {
  if (records.empty()) throw std::invalid_argument("evaluate: no records");
  EvalReport report;
  report.task = model.layout.task;
  report.count = records.size();

  if (model.layout.task == Task::kInflection) {
    std::vector<std::string> pred_surfaces, gold_surfaces;
    std::vector<std::string> pred_lemmas, gold_lemmas;
    std::vector<std::set<std::string>> pred_tags, gold_tags;
    for (const auto& rec : records) {
      pred_surfaces.push_back(predict_inflection(model, rec.lemma, rec.tags, table, index));
      gold_surfaces.push_back(rec.surface);
      const Analysis a = predict_analysis(model, rec.surface, table, index);
      pred_lemmas.push_back(a.lemma);
      gold_lemmas.push_back(rec.lemma);
      pred_tags.push_back(a.tags);
      gold_tags.push_back(rec.tags);
    }
    report.surface_em = exact_match(pred_surfaces, gold_surfaces);
    report.lemma_em = exact_match(pred_lemmas, gold_lemmas);
    report.tag_f1 = tag_f1(pred_tags, gold_tags);
  } else {
    std::vector<std::string> pred, gold;
    for (const auto& rec : records) {
      pred.push_back(predict_lemma(model, rec.surface, table));
      gold.push_back(rec.lemma);
    }
    report.lemma_em = exact_match(pred, gold);
  }
  return report;
}

EvalReport evaluate_baseline(const BaselineModel& model,
                             const std::vector<MorphRecord>& records,
                             const EmbeddingTable& table, const TagIndex& index) {
  if (records.empty()) throw std::invalid_argument("evaluate: no records");
  EvalReport report;
  report.task = model.task;
  report.count = records.size();

  std::vector<std::string> pred, gold;
  for (const auto& rec : records) {
    Vec x;
    if (model.task == Task::kInflection) {
      x = compose_word_vector(rec.lemma, table);
      const Vec t = tag_vector(rec.tags, index);
      x.insert(x.end(), t.begin(), t.end());
      gold.push_back(rec.surface);
    } else {
      x = compose_word_vector(rec.surface, table);
      gold.push_back(rec.lemma);
    }
    pred.push_back(nearest_word(mlp_forward(model.net, x), table, 1).front().token);
  }
  // the baseline has no inverse direction, so only the forward metric exists
  if (model.task == Task::kInflection)
    report.surface_em = exact_match(pred, gold);
  else
    report.lemma_em = exact_match(pred, gold);
  return report;
}

// -- ablation ------------------------------------------------------------------

namespace {

AblationRow preset_row(const std::string& name, Task task, const TrainConfig& base) {
  AblationRow row;
  row.name = name;
  row.cfg = base;
  if (name == "baseline") {
    row.baseline = true;
  } else if (task == Task::kInflection && name == "ly") {
    row.cfg.use_lx = false;
    row.cfg.use_lt = false;
  } else if (task == Task::kInflection && name == "ly_lx") {
    row.cfg.use_lx = true;
    row.cfg.use_lt = false;
  } else if (task == Task::kInflection && name == "ly_lx_lt") {
    row.cfg.use_lx = true;
    row.cfg.use_lt = true;
  } else if (task == Task::kLemmatization && name == "no_z") {
    row.cfg.z_dim = 0;
    row.cfg.z_cat = 0;
    row.cfg.use_lz = false;
  } else if (task == Task::kLemmatization && name == "z2x3") {
    row.cfg.z_dim = 2;
    row.cfg.z_cat = 3;
  } else if (task == Task::kLemmatization && name == "z6x4") {
    row.cfg.z_dim = 6;
    row.cfg.z_cat = 4;
  } else {
    throw std::runtime_error("ablation: unknown preset row \"" + name + "\"");
  }
  return row;
}

std::vector<std::string> default_rows(Task task) {
  if (task == Task::kInflection) return {"baseline", "ly", "ly_lx", "ly_lx_lt"};
  return {"baseline", "no_z", "z2x3", "z6x4"};
}

}  // namespace

AblationGrid parse_grid(std::istream& in) {
  AblationGrid grid;
  std::vector<std::string> row_names;
  std::vector<std::pair<std::string, std::string>> custom;  // name, overrides

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("grid line " + std::to_string(line_no) +
                               ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));

    if (key == "task") {
      if (value == "inflection") grid.task = Task::kInflection;
      else if (value == "lemmatization") grid.task = Task::kLemmatization;
      else throw std::runtime_error("grid: unknown task \"" + value + "\"");
    } else if (key == "data") {
      grid.data_path = value;
    } else if (key == "embeddings") {
      grid.embeddings_path = value;
    } else if (key == "rows") {
      std::istringstream rs(value);
      std::string name;
      while (std::getline(rs, name, ',')) {
        name = strip(name);
        if (!name.empty()) row_names.push_back(name);
      }
    } else if (key.rfind("row.", 0) == 0) {
      custom.emplace_back(key.substr(4), value);
    } else {
      apply_config_entry(grid.base, key, value);
    }
  }

  if (row_names.empty() && custom.empty()) row_names = default_rows(grid.task);
  for (const auto& name : row_names)
    grid.rows.push_back(preset_row(name, grid.task, grid.base));
  for (const auto& [name, overrides] : custom) {
    AblationRow row;
    row.name = name;
    row.cfg = grid.base;
    std::istringstream os(overrides);
    std::string item;
    while (std::getline(os, item, ';')) {
      const auto ieq = item.find('=');
      if (ieq == std::string::npos)
        throw std::runtime_error("grid row " + name + ": expected key=value overrides");
      auto strip = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t");
        return s.substr(a, b - a + 1);
      };
      apply_config_entry(row.cfg, strip(item.substr(0, ieq)), strip(item.substr(ieq + 1)));
    }
    grid.rows.push_back(std::move(row));
  }
  return grid;
}

AblationGrid parse_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file: " + path);
  return parse_grid(in);
}

std::vector<EvalReport> run_ablation(const AblationGrid& grid,
                                     const std::vector<MorphRecord>& records,
                                     const EmbeddingTable& table,
                                     std::ostream* log) {
  if (grid.rows.empty()) throw std::invalid_argument("ablation: empty grid");

  std::vector<EvalReport> reports;
  for (const auto& row : grid.rows) {
    EvalReport report;
    report.task = grid.task;
    report.row_name = row.name;
    report.fingerprint = config_fingerprint(row.cfg);
    try {
      const SplitResult split =
          split_dataset(records, row.cfg.split_train, row.cfg.split_dev,
                        row.cfg.split_test, row.cfg.split_seed);
      const TagIndex tags = build_tag_index(split.train);
      if (log) *log << "# row " << row.name << '\n';
      if (row.baseline) {
        const BaselineResult r =
            train_baseline(grid.task, split.train, split.dev, table, tags, row.cfg, log);
        EvalReport e = evaluate_baseline(r.model, split.test, table, tags);
        e.row_name = report.row_name;
        e.fingerprint = report.fingerprint;
        report = std::move(e);
      } else {
        InnModel model = make_task_model(grid.task, table.dim(), tags.size(), row.cfg);
        const TrainResult r =
            grid.task == Task::kInflection
                ? train_inflection(std::move(model), split.train, split.dev, table,
                                   tags, row.cfg, log)
                : train_lemmatization(std::move(model), split.train, split.dev,
                                      table, tags, row.cfg, log);
        EvalReport e = evaluate_inn(r.model, split.test, table, tags);
        e.row_name = report.row_name;
        e.fingerprint = report.fingerprint;
        report = std::move(e);
      }
    } catch (const std::exception& e) {
      report.error = e.what();
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

namespace {

std::string cell(double value) {
  if (value < 0.0) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << value;
  return out.str();
}

}  // namespace

std::string format_report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "model" << std::right << std::setw(10)
      << "L(EM%)" << std::setw(11) << "Tag(F1%)" << std::setw(10) << "S(EM%)"
      << std::setw(8) << "n" << '\n';
  out << std::string(55, '-') << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(16)
        << (r.row_name.empty() ? "model" : r.row_name);
    if (!r.error.empty()) {
      out << "  error: " << r.error << '\n';
      continue;
    }
    out << std::right << std::setw(10) << cell(r.lemma_em) << std::setw(11)
        << cell(r.tag_f1) << std::setw(10) << cell(r.surface_em) << std::setw(8)
        << r.count << '\n';
  }
  return out.str();
}

std::string format_report_records(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out.precision(10);
  for (const auto& r : reports) {
    out << "report task="
        << (r.task == Task::kInflection ? "inflection" : "lemmatization");
    if (!r.row_name.empty()) out << " row=" << r.row_name;
    if (!r.error.empty()) {
      out << " error=\"" << r.error << "\"\n";
      continue;
    }
    if (r.lemma_em >= 0) out << " lemma_em=" << r.lemma_em;
    if (r.tag_f1 >= 0) out << " tag_f1=" << r.tag_f1;
    if (r.surface_em >= 0) out << " surface_em=" << r.surface_em;
    out << " n=" << r.count;
    if (!r.fingerprint.empty()) out << " config=" << r.fingerprint;
    out << '\n';
  }
  return out.str();
}

}  // namespace morphinn
