#include "cmf/coupling.hpp"

#include "cmf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace cmf {

const char* similarity_kind_name(SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::Coupled: return "coupled";
    case SimilarityKind::Pearson: return "pearson";
    case SimilarityKind::Cosine: return "cosine";
    case SimilarityKind::Jaccard: return "jaccard";
    case SimilarityKind::RatingPearson: return "rating_pearson";
  }
  return "?";
}

SimilarityKind similarity_kind_from_name(const std::string& name) {
  for (SimilarityKind kind :
       {SimilarityKind::Coupled, SimilarityKind::Pearson, SimilarityKind::Cosine,
        SimilarityKind::Jaccard, SimilarityKind::RatingPearson})
    if (name == similarity_kind_name(kind)) return kind;
  throw ConfigError("unknown similarity kind '" + name + "'");
}

CoupledSimilarity::CoupledSimilarity(const AttributeTable& table, std::int32_t max_cached_vocab)
    : n_entities_(table.n_entities),
      n_attrs_(table.attribute_count()),
      cells_(table.cells) {
  if (n_attrs_ <= 0) throw ConfigError("attribute table has no attributes");
  if (cells_.rows() != n_entities_ || cells_.cols() != n_attrs_)
    throw ConfigError("attribute cell matrix does not match the declared shape");

  // Vocabulary sizes: at least what the table declares, widened to cover any
  // id actually present so hand-built tables without vocab strings work too.
  std::vector<std::int32_t> vocab_size(n_attrs_, 0);
  for (std::int32_t k = 0; k < n_attrs_; ++k) {
    if (static_cast<std::size_t>(k) < table.vocab.size())
      vocab_size[k] = static_cast<std::int32_t>(table.vocab[k].size());
    for (std::int32_t i = 0; i < n_entities_; ++i) {
      std::int32_t v = cells_(i, k);
      if (v < 0) throw ConfigError("negative value id in attribute table");
      vocab_size[k] = std::max(vocab_size[k], v + 1);
    }
  }

  freq_.resize(n_attrs_);
  for (std::int32_t k = 0; k < n_attrs_; ++k) {
    freq_[k].assign(vocab_size[k], 0);
    for (std::int32_t i = 0; i < n_entities_; ++i) ++freq_[k][cells_(i, k)];
  }

  cond_.assign(n_attrs_, {});
  for (std::int32_t k = 0; k < n_attrs_; ++k) {
    cond_[k].assign(n_attrs_, {});
    for (std::int32_t j = 0; j < n_attrs_; ++j) {
      if (j == k) continue;
      std::vector<std::unordered_map<std::int32_t, std::int32_t>> acc(vocab_size[k]);
      for (std::int32_t i = 0; i < n_entities_; ++i) ++acc[cells_(i, k)][cells_(i, j)];
      auto& lists = cond_[k][j];
      lists.resize(vocab_size[k]);
      for (std::int32_t x = 0; x < vocab_size[k]; ++x) {
        lists[x].reserve(acc[x].size());
        for (const auto& [w, count] : acc[x]) lists[x].push_back({w, count});
        std::sort(lists[x].begin(), lists[x].end(),
                  [](const ValueCount& a, const ValueCount& b) { return a.value < b.value; });
      }
    }
  }

  // Eager product tables for small vocabularies; the packed lower triangle
  // keeps one Real per unordered value pair.
  cache_.resize(n_attrs_);
  for (std::int32_t k = 0; k < n_attrs_; ++k) {
    const std::int32_t vsize = vocab_size[k];
    if (vsize > max_cached_vocab || n_entities_ == 0) continue;
    const std::size_t v = static_cast<std::size_t>(vsize);
    cache_[k].assign(v * (v + 1) / 2, -1.0);

    auto fill_rows = [&](std::int32_t first, std::int32_t stride) {
      for (std::int32_t x = first; x < vsize; x += stride) {
        if (freq_[k][x] == 0) continue;
        const std::size_t row = static_cast<std::size_t>(x) * (x + 1) / 2;
        for (std::int32_t y = 0; y <= x; ++y) {
          if (freq_[k][y] == 0) continue;
          Real ie = (n_attrs_ == 1 || x == y) ? 1.0 : inter_uncached(k, x, y);
          cache_[k][row + y] = intra(k, x, y) * ie;
        }
      }
    };

    unsigned hw = std::thread::hardware_concurrency();
    std::int32_t n_threads = std::min<std::int32_t>(hw == 0 ? 1 : static_cast<std::int32_t>(hw),
                                                    std::max<std::int32_t>(vsize, 1));
    if (n_threads <= 1 || vsize < 64) {
      fill_rows(0, 1);
    } else {
      std::vector<std::thread> pool;
      pool.reserve(n_threads);
      for (std::int32_t t = 0; t < n_threads; ++t)
        pool.emplace_back(fill_rows, t, n_threads);
      for (auto& th : pool) th.join();
    }
  }
}

void CoupledSimilarity::check_value(std::int32_t attr, std::int32_t value) const {
  if (attr < 0 || attr >= n_attrs_) throw std::out_of_range("attribute index out of range");
  if (value < 0 || static_cast<std::size_t>(value) >= freq_[attr].size() ||
      freq_[attr][value] == 0)
    throw std::domain_error("attribute value never occurs in the column");
}

Real CoupledSimilarity::intra(std::int32_t attr, std::int32_t x, std::int32_t y) const {
  check_value(attr, x);
  check_value(attr, y);
  const Real fx = static_cast<Real>(freq_[attr][x]);
  const Real fy = static_cast<Real>(freq_[attr][y]);
  return fx * fy / (fx + fy + fx * fy);
}

Real CoupledSimilarity::inter(std::int32_t attr, std::int32_t x, std::int32_t y) const {
  check_value(attr, x);
  check_value(attr, y);
  if (n_attrs_ == 1 || x == y) return 1.0;
  return inter_uncached(attr, x, y);
}

Real CoupledSimilarity::inter_uncached(std::int32_t k, std::int32_t x, std::int32_t y) const {
  const Real fx = static_cast<Real>(freq_[k][x]);
  const Real fy = static_cast<Real>(freq_[k][y]);
  Real total = 0.0;
  for (std::int32_t j = 0; j < n_attrs_; ++j) {
    if (j == k) continue;
    const auto& lx = cond_[k][j][x];
    const auto& ly = cond_[k][j][y];
    Real overlap = 0.0;
    std::size_t a = 0, b = 0;
    while (a < lx.size() && b < ly.size()) {
      if (lx[a].value < ly[b].value) {
        ++a;
      } else if (lx[a].value > ly[b].value) {
        ++b;
      } else {
        overlap += std::min(static_cast<Real>(lx[a].count) / fx,
                            static_cast<Real>(ly[b].count) / fy);
        ++a;
        ++b;
      }
    }
    total += overlap;
  }
  return total / static_cast<Real>(n_attrs_ - 1);
}

Real CoupledSimilarity::product(std::int32_t attr, std::int32_t x, std::int32_t y) const {
  if (!cache_[attr].empty()) {
    const std::int32_t lo = std::min(x, y);
    const std::int32_t hi = std::max(x, y);
    Real v = cache_[attr][static_cast<std::size_t>(hi) * (hi + 1) / 2 + lo];
    if (v >= 0.0) return v;
  }
  Real ie = (n_attrs_ == 1 || x == y) ? 1.0 : inter_uncached(attr, x, y);
  return intra(attr, x, y) * ie;
}

Real CoupledSimilarity::operator()(std::int32_t i, std::int32_t j) const {
  if (i < 0 || i >= n_entities_ || j < 0 || j >= n_entities_)
    throw std::out_of_range("entity index out of range");
  Real sum = 0.0;
  for (std::int32_t k = 0; k < n_attrs_; ++k) sum += product(k, cells_(i, k), cells_(j, k));
  return sum;
}

Real intra_attribute_similarity(const AttributeTable& table, std::int32_t attr, std::int32_t x,
                                std::int32_t y) {
  return CoupledSimilarity(table).intra(attr, x, y);
}

Real inter_attribute_similarity(const AttributeTable& table, std::int32_t attr, std::int32_t x,
                                std::int32_t y) {
  return CoupledSimilarity(table).inter(attr, x, y);
}

Real coupled_similarity(const AttributeTable& table, std::int32_t i, std::int32_t j) {
  return CoupledSimilarity(table)(i, j);
}

Real simple_attribute_similarity(SimilarityKind kind, const AttributeTable& table,
                                 std::int32_t i, std::int32_t j) {
  if (i < 0 || i >= table.n_entities || j < 0 || j >= table.n_entities)
    throw std::out_of_range("entity index out of range");
  const std::int32_t n_attrs = table.attribute_count();
  if (n_attrs == 0) return 0.0;

  std::int32_t shared = 0;
  for (std::int32_t k = 0; k < n_attrs; ++k)
    if (table.cells(i, k) == table.cells(j, k)) ++shared;

  const Real s = static_cast<Real>(shared);
  const Real a = static_cast<Real>(n_attrs);
  switch (kind) {
    case SimilarityKind::Cosine:
      return s / a;
    case SimilarityKind::Jaccard:
      return shared == 0 ? 0.0 : s / (2.0 * a - s);
    case SimilarityKind::Pearson: {
      // Pearson of the two one-hot encodings; the encoding length is the
      // total vocabulary size across attributes.
      Real length = 0.0;
      for (const auto& v : table.vocab) length += static_cast<Real>(v.size());
      if (length <= a) return 0.0;  // all-ones encodings have zero variance
      return (s * length - a * a) / (a * (length - a));
    }
    default:
      throw ConfigError("not an attribute similarity kind");
  }
}

Real rating_similarity(const RatingsIndex& index, Axis axis, std::int32_t i, std::int32_t j) {
  const std::int32_t n = axis == Axis::User ? index.n_users : index.n_items;
  if (i < 0 || i >= n || j < 0 || j >= n) throw std::out_of_range("entity index out of range");

  const auto& offsets = axis == Axis::User ? index.user_offsets : index.item_offsets;
  const auto& keys = axis == Axis::User ? index.user_items : index.item_users;
  const auto& values = axis == Axis::User ? index.user_values : index.item_values;

  std::int32_t a = offsets[i], a_end = offsets[i + 1];
  std::int32_t b = offsets[j], b_end = offsets[j + 1];
  std::int64_t count = 0;
  Real sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  while (a < a_end && b < b_end) {
    if (keys[a] < keys[b]) {
      ++a;
    } else if (keys[a] > keys[b]) {
      ++b;
    } else {
      Real x = values[a], y = values[b];
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
      ++count;
      ++a;
      ++b;
    }
  }
  if (count < 2) return 0.0;
  const Real fc = static_cast<Real>(count);
  const Real var_x = fc * sxx - sx * sx;
  const Real var_y = fc * syy - sy * sy;
  if (var_x <= 0.0 || var_y <= 0.0) return 0.0;
  Real r = (fc * sxy - sx * sy) / std::sqrt(var_x * var_y);
  return std::clamp(r, -1.0, 1.0);
}

NeighborGraph build_neighbor_graph(const SimilarityFn& sim, std::int32_t n_entities,
                                   std::int32_t k, bool keep_nonpositive, bool normalize,
                                   std::int32_t threads) {
  if (n_entities < 0) throw ConfigError("negative entity count");
  if (k < 0) throw ConfigError("negative neighbor count");

  NeighborGraph graph;
  graph.n_entities = n_entities;
  graph.neighbors.resize(n_entities);
  graph.normalized = normalize;

  auto cmp = [](const Neighbor& a, const Neighbor& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.index < b.index;
  };

  auto fill_range = [&](std::int32_t begin, std::int32_t end) {
    std::vector<Neighbor> candidates;
    for (std::int32_t i = begin; i < end; ++i) {
      candidates.clear();
      for (std::int32_t j = 0; j < n_entities; ++j) {
        if (j == i) continue;
        Real w = sim(i, j);
        if (!std::isfinite(w)) throw std::domain_error("non-finite similarity value");
        if (w > 0.0 || keep_nonpositive) candidates.push_back({j, w});
      }
      const std::size_t keep = std::min<std::size_t>(candidates.size(), k);
      std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), cmp);
      candidates.resize(keep);
      if (normalize) {
        Real sum = 0.0;
        for (const auto& nb : candidates) sum += nb.weight;
        if (sum > 0.0) {
          for (auto& nb : candidates) nb.weight /= sum;
        } else {
          candidates.clear();
        }
      }
      graph.neighbors[i] = candidates;
    }
  };

  std::int32_t n_threads = threads;
  if (n_threads <= 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n_threads = hw == 0 ? 1 : static_cast<std::int32_t>(hw);
  }
  n_threads = std::min(n_threads, std::max<std::int32_t>(n_entities, 1));

  if (n_threads <= 1) {
    fill_range(0, n_entities);
    return graph;
  }

  std::vector<std::thread> pool;
  std::mutex error_mutex;
  std::exception_ptr first_error;
  pool.reserve(n_threads);
  for (std::int32_t t = 0; t < n_threads; ++t) {
    std::int32_t begin = static_cast<std::int32_t>(
        static_cast<std::int64_t>(n_entities) * t / n_threads);
    std::int32_t end = static_cast<std::int32_t>(
        static_cast<std::int64_t>(n_entities) * (t + 1) / n_threads);
    pool.emplace_back([&, begin, end] {
      try {
        fill_range(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
  return graph;
}

NeighborGraph attribute_neighbor_graph(const AttributeTable& table, SimilarityKind kind,
                                       std::int32_t k, bool normalize, std::int32_t threads) {
  if (kind == SimilarityKind::RatingPearson)
    throw ConfigError("rating similarity requires the ratings index");
  if (kind == SimilarityKind::Coupled) {
    auto engine = std::make_shared<CoupledSimilarity>(table);
    SimilarityFn fn = [engine](std::int32_t i, std::int32_t j) { return (*engine)(i, j); };
    return build_neighbor_graph(fn, table.n_entities, k, false, normalize, threads);
  }
  SimilarityFn fn = [&table, kind](std::int32_t i, std::int32_t j) {
    return simple_attribute_similarity(kind, table, i, j);
  };
  return build_neighbor_graph(fn, table.n_entities, k, false, normalize, threads);
}

NeighborGraph rating_neighbor_graph(const RatingsIndex& index, Axis axis, std::int32_t k,
                                    bool keep_nonpositive, bool normalize,
                                    std::int32_t threads) {
  const std::int32_t n = axis == Axis::User ? index.n_users : index.n_items;
  SimilarityFn fn = [&index, axis](std::int32_t i, std::int32_t j) {
    return rating_similarity(index, axis, i, j);
  };
  return build_neighbor_graph(fn, n, k, keep_nonpositive, normalize, threads);
}

}  // namespace cmf
