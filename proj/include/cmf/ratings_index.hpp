#pragma once

#include "cmf/types.hpp"

#include <optional>
#include <vector>

namespace cmf {

/// Read-only CSR views of a RatingDataset, by user and by item, plus the
/// per-entity and global means the predictors fall back to.
struct RatingsIndex {
  explicit RatingsIndex(const RatingDataset& ds);

  std::int32_t n_users = 0;
  std::int32_t n_items = 0;
  Real scale_min = 1.0;
  Real scale_max = 5.0;
  Real global_mean = 0.0;

  std::vector<std::int32_t> user_offsets;  // size n_users + 1
  std::vector<std::int32_t> user_items;    // item ids, sorted per user
  std::vector<Real> user_values;

  std::vector<std::int32_t> item_offsets;  // size n_items + 1
  std::vector<std::int32_t> item_users;    // user ids, sorted per item
  std::vector<Real> item_values;

  std::int32_t user_count(std::int32_t u) const {
    return user_offsets[u + 1] - user_offsets[u];
  }
  std::int32_t item_count(std::int32_t i) const {
    return item_offsets[i + 1] - item_offsets[i];
  }

  /// Mean of u's ratings; global mean when u has none.
  Real user_mean(std::int32_t u) const;
  Real item_mean(std::int32_t i) const;

  /// Rating of (u, i) if observed. Binary search in u's row.
  std::optional<Real> rating(std::int32_t u, std::int32_t i) const;

 private:
  std::vector<Real> user_sum_;
  std::vector<Real> item_sum_;
};

}  // namespace cmf
