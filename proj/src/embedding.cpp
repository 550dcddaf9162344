#include "morphinn/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace morphinn {

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw std::invalid_argument("embedding table: dim must be >= 1");
}

bool EmbeddingTable::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

const Vec& EmbeddingTable::vector_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end())
    throw std::out_of_range("embedding table: unknown token \"" + token + "\"");
  return vecs_[it->second];
}

void EmbeddingTable::add(std::string token, Vec v) {
  if (token.empty()) throw std::invalid_argument("embedding table: empty token");
  if (v.size() != dim_)
    throw std::invalid_argument("embedding table: vector for \"" + token +
                                "\" has length " + std::to_string(v.size()) +
                                ", expected " + std::to_string(dim_));
  if (index_.count(token))
    throw std::invalid_argument("embedding table: duplicate token \"" + token + "\"");
  double sq = 0.0;
  for (double x : v) {
    if (!std::isfinite(x))
      throw std::invalid_argument("embedding table: non-finite value for \"" +
                                  token + "\"");
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm == 0.0)
    throw std::invalid_argument("embedding table: zero vector for \"" + token + "\"");

  index_.emplace(token, tokens_.size());
  max_token_len_ = std::max(max_token_len_, token.size());
  tokens_.push_back(std::move(token));
  vecs_.push_back(std::move(v));
  norms_.push_back(norm);
}

EmbeddingTable load_embeddings(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("embeddings: missing header line");
  std::istringstream header(line);
  long long count = -1, dim = -1;
  if (!(header >> count >> dim) || count < 0 || dim < 1)
    throw std::runtime_error("embeddings: malformed header \"" + line + "\"");

  const std::size_t dim_n = std::size_t(dim);
  EmbeddingTable table(dim_n);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    Vec v(dim_n);
    for (std::size_t j = 0; j < dim_n; ++j) {
      if (!(ls >> v[j]))
        throw std::runtime_error("embeddings line " + std::to_string(line_no) +
                                 ": expected " + std::to_string(dim) +
                                 " values for \"" + token + "\"");
    }
    double trailing;
    if (ls >> trailing)
      throw std::runtime_error("embeddings line " + std::to_string(line_no) +
                               ": too many values for \"" + token + "\"");
    try {
      table.add(std::move(token), std::move(v));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("embeddings line " + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  if (table.size() != std::size_t(count))
    throw std::runtime_error("embeddings: header declares " +
                             std::to_string(count) + " entries, file has " +
                             std::to_string(table.size()));
  return table;
}

EmbeddingTable load_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings file: " + path);
  return load_embeddings(in);
}

void save_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.token_at(i);
    for (double x : table.vector_at(i)) out << ' ' << x;
    out << '\n';
  }
}

void save_embeddings_file(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write embeddings file: " + path);
  save_embeddings(table, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Vec compose_word_vector(const std::string& word, const EmbeddingTable& table) {
  if (word.empty())
    throw std::invalid_argument("compose_word_vector: empty word");
  if (table.contains(word)) return table.vector_of(word);

  Vec sum(table.dim(), 0.0);
  std::size_t pos = 0;
  while (pos < word.size()) {
    const std::size_t remaining = word.size() - pos;
    std::size_t len = std::min(remaining, table.max_token_length());
    bool matched = false;
    for (; len >= 1; --len) {
      const std::string piece = word.substr(pos, len);
      if (table.contains(piece)) {
        const Vec& v = table.vector_of(piece);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
        pos += len;
        matched = true;
        break;
      }
    }
    if (!matched)
      throw std::runtime_error("compose_word_vector: cannot segment \"" + word +
                               "\", no subword matches \"" + word.substr(pos) +
                               "\"");
  }
  return sum;
}

std::vector<Neighbor> nearest_word(const Vec& query, const EmbeddingTable& table,
                                   std::size_t k) {
  if (table.size() == 0)
    throw std::invalid_argument("nearest_word: empty table");
  if (k < 1) throw std::invalid_argument("nearest_word: k must be >= 1");
  if (query.size() != table.dim())
    throw std::invalid_argument("nearest_word: query dimension mismatch");
  double qsq = 0.0;
  for (double x : query) qsq += x * x;
  const double qnorm = std::sqrt(qsq);
  if (qnorm < 1e-12)
    throw std::invalid_argument("nearest_word: zero-norm query");

  std::vector<std::size_t> order(table.size());
  std::vector<double> sims(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    order[i] = i;
    const Vec& e = table.vector_at(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) dot += query[j] * e[j];
    sims[i] = dot / (qnorm * table.norm_at(i));
  }
  auto better = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return table.token_at(a) < table.token_at(b);
  };
  const std::size_t take = std::min(k, table.size());
  std::partial_sort(order.begin(), order.begin() + take, order.end(), better);

  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    out.push_back({table.token_at(order[i]), sims[order[i]]});
  return out;
}

void extend_vocabulary(EmbeddingTable& table,
                       const std::vector<std::pair<std::string, Vec>>& extra) {
  for (const auto& [token, v] : extra) {
    if (v.size() != table.dim())
      throw std::invalid_argument("extend_vocabulary: dimension mismatch for \"" +
                                  token + "\"");
    if (table.contains(token)) {
      if (table.vector_of(token) != v)
        throw std::invalid_argument(
            "extend_vocabulary: token \"" + token +
            "\" already present with a different vector");
      continue;
    }
    table.add(token, v);
  }
}

void add_random_distractors(EmbeddingTable& table, std::size_t count,
                            std::uint64_t seed) {
  double mean_norm = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) mean_norm += table.norm_at(i);
  mean_norm = table.size() ? mean_norm / double(table.size()) : 1.0;

  Rng rng(mix_seed(seed, 0x64697374ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t serial = 0;
  for (std::size_t added = 0; added < count;) {
    std::string token = "#dist" + std::to_string(serial++);
    if (table.contains(token)) continue;
    Vec v(table.dim());
    double sq = 0.0;
    for (auto& x : v) {
      x = gauss(rng);
      sq += x * x;
    }
    const double scale = mean_norm / std::sqrt(sq);
    for (auto& x : v) x *= scale;
    table.add(std::move(token), std::move(v));
    ++added;
  }
}

}  // namespace morphinn
