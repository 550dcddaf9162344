#pragma once

// Word-vector space: text-format loading, subword composition by summation,
// exact cosine nearest-neighbor search, and distractor-vocabulary extension.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "morphinn/numerics.hpp"

namespace morphinn {

/// Ordered token -> vector mapping. All vectors share one dimension and are
/// nonzero; token strings are unique. Entries double as the subword
/// vocabulary for greedy segmentation.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }

  bool contains(const std::string& token) const;
  const Vec& vector_of(const std::string& token) const;
  const std::string& token_at(std::size_t i) const { return tokens_[i]; }
  const Vec& vector_at(std::size_t i) const { return vecs_[i]; }
  double norm_at(std::size_t i) const { return norms_[i]; }
  std::size_t max_token_length() const { return max_token_len_; }

  /// Throws on duplicate token, dimension mismatch, zero or non-finite vector.
  void add(std::string token, Vec v);

 private:
  std::size_t dim_;
  std::vector<std::string> tokens_;
  std::vector<Vec> vecs_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t max_token_len_ = 0;
};

/// Text format: header "count dim", then one token followed by dim floats per
/// line, space-separated.
EmbeddingTable load_embeddings(std::istream& in);
EmbeddingTable load_embeddings_file(const std::string& path);
void save_embeddings(const EmbeddingTable& table, std::ostream& out);
void save_embeddings_file(const EmbeddingTable& table, const std::string& path);

/// Whole-word vector when the word is an entry; otherwise the sum of vectors
/// from a greedy longest-match segmentation over the table's tokens. Throws
/// naming the unmatched residue when no segmentation covers the word.
Vec compose_word_vector(const std::string& word, const EmbeddingTable& table);

struct Neighbor {
  std::string token;
  double similarity = 0.0;
};

/// Exact top-k by cosine similarity over a full scan; ties break
/// lexicographically, results in descending similarity.
std::vector<Neighbor> nearest_word(const Vec& query, const EmbeddingTable& table,
                                   std::size_t k);

/// Union with extra entries. Existing tokens keep their vectors; re-adding a
/// token with a different vector is an error.
void extend_vocabulary(EmbeddingTable& table,
                       const std::vector<std::pair<std::string, Vec>>& extra);

/// Seeded random distractor vectors scaled to the table's mean norm, named
/// "#dist<i>". They only matter as nearest-neighbor competitors.
void add_random_distractors(EmbeddingTable& table, std::size_t count,
                            std::uint64_t seed);

}  // namespace morphinn
