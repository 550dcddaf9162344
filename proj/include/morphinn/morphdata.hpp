#pragma once

// Dataset model: (lemma, tags, surface) records, TSV parsing, tag indexing,
// splitting, and a deterministic synthetic toy language for desk-scale runs.

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "morphinn/embedding.hpp"

namespace morphinn {

struct MorphRecord {
  std::string lemma;
  std::set<std::string> tags;
  std::string surface;

  bool operator==(const MorphRecord&) const = default;
};

/// Format: one record per line, "lemma<TAB>surface<TAB>tag1;tag2", the tag
/// field optional. Order-preserving; duplicates retained.
std::vector<MorphRecord> parse_dataset(std::istream& in);
std::vector<MorphRecord> parse_dataset_file(const std::string& path);
void write_dataset(const std::vector<MorphRecord>& records, std::ostream& out);
void write_dataset_file(const std::vector<MorphRecord>& records,
                        const std::string& path);

/// Bijection between tag strings and 0..N-1, built from the training split
/// only; tags are sorted lexicographically before indexing.
struct TagIndex {
  std::vector<std::string> names;  // index -> tag
  std::unordered_map<std::string, std::size_t> index;

  std::size_t size() const { return names.size(); }
};

TagIndex build_tag_index(const std::vector<MorphRecord>& train);

/// Indicator vector of length N. Tags absent from the index are dropped;
/// the drop count is reported through `dropped` when provided.
Vec tag_vector(const std::set<std::string>& tags, const TagIndex& index,
               std::size_t* dropped = nullptr);

/// Agglutinative toy language: CV-syllable lemmas, one suffix per (slot, tag),
/// surfaces formed by plain concatenation. Every (lemma, tag-combination)
/// pair appears exactly once.
struct ToyLangConfig {
  std::size_t lemma_count = 200;
  std::size_t suffix_slots = 3;
  std::size_t tags_per_slot = 2;
  std::size_t embedding_dim = 100;
  std::uint64_t seed = 1;
};

struct ToyLanguage {
  std::vector<MorphRecord> records;
  EmbeddingTable table;
};

ToyLanguage generate_toy_language(const ToyLangConfig& cfg);

struct SplitResult {
  std::vector<MorphRecord> train, dev, test;
};

/// Seeded shuffle followed by a contiguous split; partitions are disjoint and
/// exhaustive. Ratios must be positive and sum to 1.
SplitResult split_dataset(std::vector<MorphRecord> records, double train_ratio,
                          double dev_ratio, double test_ratio,
                          std::uint64_t seed);

}  // namespace morphinn
