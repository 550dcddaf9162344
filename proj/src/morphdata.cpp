#include "morphinn/morphdata.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace morphinn {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::vector<MorphRecord> parse_dataset(std::istream& in) {
  std::vector<MorphRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    auto fields = split_on(line, '\t');
    if (fields.size() < 2 || fields.size() > 3)
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": expected 2 or 3 tab-separated fields, got " +
                               std::to_string(fields.size()));
    MorphRecord rec;
    rec.lemma = fields[0];
    rec.surface = fields[1];
    if (rec.lemma.empty())
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": empty lemma");
    if (rec.surface.empty())
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": empty surface");
    if (fields.size() == 3) {
      for (const auto& tag : split_on(fields[2], ';'))
        if (!tag.empty()) rec.tags.insert(tag);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<MorphRecord> parse_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  return parse_dataset(in);
}

void write_dataset(const std::vector<MorphRecord>& records, std::ostream& out) {
  for (const auto& rec : records) {
    out << rec.lemma << '\t' << rec.surface;
    if (!rec.tags.empty()) {
      out << '\t';
      bool first = true;
      for (const auto& tag : rec.tags) {
        if (!first) out << ';';
        out << tag;
        first = false;
      }
    }
    out << '\n';
  }
}

void write_dataset_file(const std::vector<MorphRecord>& records,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  write_dataset(records, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

TagIndex build_tag_index(const std::vector<MorphRecord>& train) {
  std::set<std::string> unique;
  for (const auto& rec : train) unique.insert(rec.tags.begin(), rec.tags.end());

  TagIndex index;
  index.names.assign(unique.begin(), unique.end());  // already sorted
  for (std::size_t i = 0; i < index.names.size(); ++i)
    index.index.emplace(index.names[i], i);
  return index;
}

Vec tag_vector(const std::set<std::string>& tags, const TagIndex& index,
               std::size_t* dropped) {
  Vec v(index.size(), 0.0);
  for (const auto& tag : tags) {
    auto it = index.index.find(tag);
    if (it == index.index.end()) {
      if (dropped) ++*dropped;
      continue;
    }
    v[it->second] = 1.0;
  }
  return v;
}

namespace {

const char kConsonants[] = {'b', 'd', 'f', 'g', 'k', 'l',
                            'm', 'n', 'p', 'r', 's', 't'};
const char kVowels[] = {'a', 'e', 'i', 'o', 'u'};

std::string random_syllable(Rng& rng) {
  std::uniform_int_distribution<std::size_t> c(0, std::size(kConsonants) - 1);
  std::uniform_int_distribution<std::size_t> v(0, std::size(kVowels) - 1);
  return std::string{kConsonants[c(rng)], kVowels[v(rng)]};
}

std::vector<std::string> all_syllables() {
  std::vector<std::string> out;
  for (char c : kConsonants)
    for (char v : kVowels) out.push_back(std::string{c, v});
  return out;
}

}  // namespace

ToyLanguage generate_toy_language(const ToyLangConfig& cfg) {
  if (cfg.lemma_count < 1 || cfg.suffix_slots < 1 || cfg.tags_per_slot < 1)
    throw std::invalid_argument("toy language: all counts must be >= 1");
  if (cfg.embedding_dim < cfg.suffix_slots + 1)
    throw std::invalid_argument(
        "toy language: embedding_dim must be at least suffix_slots + 1 "
        "(the per-slot offsets need room)");

  std::size_t combos = 1;
  for (std::size_t s = 0; s < cfg.suffix_slots; ++s) {
    if (combos > 10'000'000 / cfg.tags_per_slot)
      throw std::invalid_argument("toy language: tag combination count too large");
    combos *= cfg.tags_per_slot;
  }

  Rng rng(mix_seed(cfg.seed, 0x746f79ULL));

  // Unique lemmas, all three syllables so surfaces decompose unambiguously.
  std::unordered_set<std::string> used;
  std::vector<std::string> lemmas;
  lemmas.reserve(cfg.lemma_count);
  while (lemmas.size() < cfg.lemma_count) {
    std::string lemma = random_syllable(rng) + random_syllable(rng) + random_syllable(rng);
    if (used.insert(lemma).second) lemmas.push_back(std::move(lemma));
    if (used.size() > 200'000)
      throw std::invalid_argument("toy language: lemma_count too large for the syllable inventory");
  }

  // One suffix per (slot, tag), unique across slots. Single syllables while
  // they last, then syllable pairs.
  const std::size_t n_suffixes = cfg.suffix_slots * cfg.tags_per_slot;
  std::vector<std::string> syllables = all_syllables();
  std::shuffle(syllables.begin(), syllables.end(), rng);
  std::vector<std::string> suffix_pool = syllables;
  if (n_suffixes > suffix_pool.size()) {
    std::vector<std::string> pairs;
    for (const auto& a : syllables)
      for (const auto& b : syllables) pairs.push_back(a + b);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    suffix_pool.insert(suffix_pool.end(), pairs.begin(), pairs.end());
    if (n_suffixes > suffix_pool.size())
      throw std::invalid_argument("toy language: too many slot/tag suffixes");
  }

  std::vector<std::vector<std::string>> suffix(cfg.suffix_slots);
  std::vector<std::vector<std::string>> tag_name(cfg.suffix_slots);
  std::size_t next = 0;
  for (std::size_t s = 0; s < cfg.suffix_slots; ++s) {
    for (std::size_t k = 0; k < cfg.tags_per_slot; ++k) {
      suffix[s].push_back(suffix_pool[next++]);
      tag_name[s].push_back(std::string{char('A' + (s % 26))} + std::to_string(k));
    }
  }

  // Vector layout: the first dim - slots coordinates carry the lemma identity
  // (a random unit vector), the trailing `slots` coordinates carry one value
  // per slot that identifies the chosen tag. Slot values are centered so the
  // surface vectors spread across orthants instead of sharing a large mean,
  // and scaled so the slot block and the lemma block carry comparable norm;
  // both are needed for cosine decoding to separate competitors.
  const std::size_t lemma_dims = cfg.embedding_dim - cfg.suffix_slots;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double slot_gap = 2.0 / std::sqrt(double(cfg.suffix_slots));
  const double kNoise = 0.02;
  const double slot_center = double(cfg.tags_per_slot - 1) / 2.0;

  std::vector<Vec> lemma_base(cfg.lemma_count);
  for (auto& base : lemma_base) {
    base.assign(cfg.embedding_dim, 0.0);
    double sq = 0.0;
    for (std::size_t i = 0; i < lemma_dims; ++i) {
      base[i] = gauss(rng);
      sq += base[i] * base[i];
    }
    const double norm = std::sqrt(sq);
    for (std::size_t i = 0; i < lemma_dims; ++i) base[i] /= norm;
  }

  auto with_noise = [&](Vec v) {
    for (auto& x : v) x += kNoise * gauss(rng);
    return v;
  };

  ToyLanguage out{{}, EmbeddingTable(cfg.embedding_dim)};
  out.records.reserve(cfg.lemma_count * combos);
  for (std::size_t li = 0; li < cfg.lemma_count; ++li)
    out.table.add(lemmas[li], with_noise(lemma_base[li]));

  std::vector<std::size_t> choice(cfg.suffix_slots, 0);
  for (std::size_t li = 0; li < cfg.lemma_count; ++li) {
    std::fill(choice.begin(), choice.end(), 0);
    for (std::size_t c = 0; c < combos; ++c) {
      MorphRecord rec;
      rec.lemma = lemmas[li];
      rec.surface = lemmas[li];
      Vec v = lemma_base[li];
      for (std::size_t s = 0; s < cfg.suffix_slots; ++s) {
        rec.surface += suffix[s][choice[s]];
        rec.tags.insert(tag_name[s][choice[s]]);
        v[lemma_dims + s] = slot_gap * (double(choice[s]) - slot_center);
      }
      out.table.add(rec.surface, with_noise(std::move(v)));
      out.records.push_back(std::move(rec));
      // mixed-radix increment over the slot choices
      for (std::size_t s = cfg.suffix_slots; s-- > 0;) {
        if (++choice[s] < cfg.tags_per_slot) break;
        choice[s] = 0;
      }
    }
  }
  return out;
}

SplitResult split_dataset(std::vector<MorphRecord> records, double train_ratio,
                          double dev_ratio, double test_ratio,
                          std::uint64_t seed) {
  if (!(train_ratio > 0.0) || !(dev_ratio > 0.0) || !(test_ratio > 0.0))
    throw std::invalid_argument("split_dataset: ratios must be positive");
  if (std::abs(train_ratio + dev_ratio + test_ratio - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: ratios must sum to 1");
  if (records.size() < 3)
    throw std::invalid_argument("split_dataset: fewer records than partitions");

  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  std::shuffle(records.begin(), records.end(), rng);

  const std::size_t n = records.size();
  const std::size_t n_train = std::size_t(double(n) * train_ratio);
  const std::size_t n_dev = std::size_t(double(n) * dev_ratio);

  SplitResult out;
  out.train.assign(records.begin(), records.begin() + n_train);
  out.dev.assign(records.begin() + n_train, records.begin() + n_train + n_dev);
  out.test.assign(records.begin() + n_train + n_dev, records.end());
  return out;
}

}  // namespace morphinn
