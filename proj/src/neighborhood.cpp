#include "cmf/neighborhood.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmf {

namespace {

void check_graph(const NeighborGraph& graph, std::int32_t n_entities) {
  if (graph.n_entities != n_entities ||
      graph.neighbors.size() != static_cast<std::size_t>(n_entities))
    throw std::invalid_argument("neighbor graph does not match the ratings index");
}

}  // namespace

Real predict_ubcf(const RatingsIndex& index, const NeighborGraph& user_graph, std::int32_t u,
                  std::int32_t i) {
  if (u < 0 || u >= index.n_users || i < 0 || i >= index.n_items)
    throw std::out_of_range("prediction index out of range");
  check_graph(user_graph, index.n_users);

  if (index.user_count(u) == 0)
    return std::clamp(index.global_mean, index.scale_min, index.scale_max);

  Real numerator = 0.0;
  Real denominator = 0.0;
  for (const auto& nb : user_graph.neighbors[u]) {
    auto r = index.rating(nb.index, i);
    if (!r) continue;
    numerator += nb.weight * (*r - index.user_mean(nb.index));
    denominator += std::abs(nb.weight);
  }
  Real prediction = index.user_mean(u);
  if (denominator > 0.0) prediction += numerator / denominator;
  return std::clamp(prediction, index.scale_min, index.scale_max);
}

Real predict_ibcf(const RatingsIndex& index, const NeighborGraph& item_graph, std::int32_t u,
                  std::int32_t i) {
  if (u < 0 || u >= index.n_users || i < 0 || i >= index.n_items)
    throw std::out_of_range("prediction index out of range");
  check_graph(item_graph, index.n_items);

  Real numerator = 0.0;
  Real denominator = 0.0;
  for (const auto& nb : item_graph.neighbors[i]) {
    auto r = index.rating(u, nb.index);
    if (!r) continue;
    numerator += nb.weight * *r;
    denominator += std::abs(nb.weight);
  }
  // item_mean already falls back to the global mean for unrated items.
  Real prediction = denominator > 0.0 ? numerator / denominator : index.item_mean(i);
  return std::clamp(prediction, index.scale_min, index.scale_max);
}

}  // namespace cmf
