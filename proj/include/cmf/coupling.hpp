#pragma once

#include "cmf/ratings_index.hpp"
#include "cmf/types.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace cmf {

enum class SimilarityKind { Coupled, Pearson, Cosine, Jaccard, RatingPearson };

const char* similarity_kind_name(SimilarityKind kind);
SimilarityKind similarity_kind_from_name(const std::string& name);

/// Coupled similarity over one categorical attribute table.
///
/// For values x, y of attribute k with occurrence sets g(x), g(y):
///   intra(k, x, y) = |g(x)||g(y)| / (|g(x)| + |g(y)| + |g(x)||g(y)|)
///   inter(k, x, y) = 1/(J-1) * sum over attributes j != k of
///                    sum_{w} min(P(w|x), P(w|y))
/// where P(w|x) = |g_j(w) n g_k(x)| / |g_k(x)| and w ranges over the values
/// of attribute j co-occurring with both x and y. For J = 1 the inter
/// coupling is defined as 1. The pairwise entity similarity is
///   sum_k intra(k, V_ik, V_jk) * inter(k, V_ik, V_jk),
/// symmetric and bounded by the attribute count.
///
/// Construction precomputes value frequencies, co-occurrence distributions,
/// and dense per-attribute value-pair product tables for attributes with at
/// most max_cached_vocab values; larger attributes are evaluated per query.
/// All queries are const and safe to run from multiple threads.
class CoupledSimilarity {
 public:
  explicit CoupledSimilarity(const AttributeTable& table,
                             std::int32_t max_cached_vocab = 4096);

  /// Intra-attribute coupling in (0, 1). Both values must occur in the
  /// column (std::domain_error otherwise).
  Real intra(std::int32_t attr, std::int32_t x, std::int32_t y) const;

  /// Inter-attribute coupling in [0, 1]; inter(k, x, x) = 1.
  Real inter(std::int32_t attr, std::int32_t x, std::int32_t y) const;

  /// Coupled similarity of two entities.
  Real operator()(std::int32_t i, std::int32_t j) const;

  std::int32_t n_entities() const { return n_entities_; }

 private:
  Real product(std::int32_t attr, std::int32_t x, std::int32_t y) const;
  Real inter_uncached(std::int32_t attr, std::int32_t x, std::int32_t y) const;
  void check_value(std::int32_t attr, std::int32_t value) const;

  struct ValueCount {
    std::int32_t value;
    std::int32_t count;
  };

  std::int32_t n_entities_ = 0;
  std::int32_t n_attrs_ = 0;
  IntMatrix cells_;
  std::vector<std::vector<std::int32_t>> freq_;  // [attr][value] = |g(value)|
  // cond_[k][j][x] = sorted (value of j, co-occurrence count with x on k)
  std::vector<std::vector<std::vector<std::vector<ValueCount>>>> cond_;
  // cache_[k], for small vocabularies: packed lower triangle of
  // intra * inter products, -1 where a value never occurs
  std::vector<std::vector<Real>> cache_;
};

/// Convenience single-query forms of the operations above. Each call builds
/// the engine, so prefer CoupledSimilarity for bulk work.
Real intra_attribute_similarity(const AttributeTable& table, std::int32_t attr,
                                std::int32_t x, std::int32_t y);
Real inter_attribute_similarity(const AttributeTable& table, std::int32_t attr,
                                std::int32_t x, std::int32_t y);
Real coupled_similarity(const AttributeTable& table, std::int32_t i, std::int32_t j);

/// Pearson / cosine / Jaccard similarity of two entities over the one-hot
/// encoding of their attribute rows (one active position per attribute in
/// the concatenated vocabularies). Pearson returns 0 when the encoding has
/// zero variance.
Real simple_attribute_similarity(SimilarityKind kind, const AttributeTable& table,
                                 std::int32_t i, std::int32_t j);

enum class Axis { User, Item };

/// Pearson correlation over co-rated entries only; fewer than two co-rated
/// entries or zero variance yields 0.
Real rating_similarity(const RatingsIndex& index, Axis axis, std::int32_t i,
                       std::int32_t j);

using SimilarityFn = std::function<Real(std::int32_t, std::int32_t)>;

/// Top-K neighbor lists under an arbitrary pairwise similarity. Self pairs
/// are excluded; non-positive similarities are dropped unless
/// keep_nonpositive; ranking is by descending similarity with ties broken
/// by ascending index. With normalize, each list is divided by its weight
/// sum (lists whose sum is not positive are emptied). Rows are filled in
/// parallel (threads = 0 picks the hardware count); the result does not
/// depend on the thread count.
NeighborGraph build_neighbor_graph(const SimilarityFn& sim, std::int32_t n_entities,
                                   std::int32_t k, bool keep_nonpositive = false,
                                   bool normalize = true, std::int32_t threads = 0);

/// Graph over an attribute table using Coupled / Pearson / Cosine / Jaccard.
NeighborGraph attribute_neighbor_graph(const AttributeTable& table, SimilarityKind kind,
                                       std::int32_t k, bool normalize = true,
                                       std::int32_t threads = 0);

/// Graph over rating-Pearson similarity along one axis.
NeighborGraph rating_neighbor_graph(const RatingsIndex& index, Axis axis, std::int32_t k,
                                    bool keep_nonpositive = false, bool normalize = true,
                                    std::int32_t threads = 0);

}  // namespace cmf
