#pragma once

#include "cmf/coupling.hpp"
#include "cmf/ratings_index.hpp"

namespace cmf {

/// Mean-centered user-based prediction:
///   mean(u) + sum over neighbors v that rated i of w_uv (R_vi - mean(v))
///           / sum |w_uv|
/// falling back to mean(u) when no neighbor rated i, and to the global mean
/// when u has no training ratings. Always clamped to the rating scale.
Real predict_ubcf(const RatingsIndex& index, const NeighborGraph& user_graph,
                  std::int32_t u, std::int32_t i);

/// Weighted item-based prediction:
///   sum over neighbors j of i rated by u of w_ij R_uj / sum |w_ij|
/// falling back to the item mean, then the global mean. Clamped.
Real predict_ibcf(const RatingsIndex& index, const NeighborGraph& item_graph,
                  std::int32_t u, std::int32_t i);

}  // namespace cmf
