#pragma once

#include "cmf/types.hpp"

#include <utility>

namespace cmf {

/// offset + P_u . Q_i, projected into [scale_min, scale_max] when clamp is
/// set. Raw values are used inside the objective and gradients; clamping is
/// an evaluation-time concern.
Real predict_rating(const FactorModel& model, std::int32_t u, std::int32_t i, bool clamp);

/// Regularized squared reconstruction error with neighborhood pull terms:
///
///   L = 1/2 sum over observed (u,i) of (R_ui - offset - P_u.Q_i)^2
///     + lambda/2 (|P|_F^2 + |Q|_F^2)
///     + alpha/2  sum_u |P_u - sum_{v in N(u)} w_uv P_v|^2
///     + beta/2   sum_i |Q_i - sum_{j in N(i)} w_ij Q_j|^2
///
/// Graphs may be null when the corresponding weight is zero. Throws
/// std::invalid_argument on a missing required graph, std::domain_error on
/// non-finite model entries.
Real objective_value(const FactorModel& model, const RatingDataset& ds,
                     const NeighborGraph* user_graph, const NeighborGraph* item_graph,
                     const TrainConfig& cfg);

struct Gradients {
  Matrix user;  // dL/dP
  Matrix item;  // dL/dQ
};

/// Full-batch analytic gradient of objective_value. The neighborhood terms
/// contribute both the direct pull on each row and the reverse pull on every
/// row that appears in someone's neighbor list.
Gradients gradients(const FactorModel& model, const RatingDataset& ds,
                    const NeighborGraph* user_graph, const NeighborGraph* item_graph,
                    const TrainConfig& cfg);

struct TrainResult {
  FactorModel model;
  TrainTrace trace;
};

/// Full-batch gradient descent on objective_value. P and Q start uniform in
/// [-0.05, 0.05] from cfg.seed; the offset is fixed to the training mean
/// (0 for RSVD). An epoch that would increase the objective halves the step
/// size and retries; training stops when the relative objective decrease
/// falls below convergence_tol or max_epochs is reached. A non-finite
/// objective that persists after the step size drops below 1e-12 raises
/// TrainingFailure carrying the trace.
///
/// PMF and RSVD force alpha = beta = 0 and need no graphs. The other
/// variants require a graph for every positive coupling weight; which
/// similarity built the graph is the caller's contract.
TrainResult train(const RatingDataset& ds, const NeighborGraph* user_graph,
                  const NeighborGraph* item_graph, const TrainConfig& cfg);

}  // namespace cmf
