#include "cmf/factorization.hpp"

#include "cmf/errors.hpp"
#include "cmf/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cmf {

namespace {

// PMF and RSVD are plain regularized MF: coupling weights are forced to 0
// regardless of what the config carries.
std::pair<Real, Real> effective_coupling(const TrainConfig& cfg) {
  if (cfg.variant == Variant::PMF || cfg.variant == Variant::RSVD) return {0.0, 0.0};
  return {cfg.alpha, cfg.beta};
}

void check_graph(const NeighborGraph* graph, std::int32_t n_entities, const char* side) {
  if (!graph)
    throw std::invalid_argument(std::string(side) +
                                " graph required when its coupling weight is positive");
  if (graph->n_entities != n_entities ||
      graph->neighbors.size() != static_cast<std::size_t>(n_entities))
    throw std::invalid_argument(std::string(side) + " graph does not match the dataset");
}

void check_shapes(const FactorModel& model, const RatingDataset& ds) {
  if (model.n_users() != ds.n_users || model.n_items() != ds.n_items)
    throw std::invalid_argument("model entity counts do not match the dataset");
  if (model.user_factors.cols() != model.item_factors.cols())
    throw std::invalid_argument("P and Q have different latent dimensions");
}

void check_entries(const RatingDataset& ds) {
  for (const auto& e : ds.entries)
    if (e.user < 0 || e.user >= ds.n_users || e.item < 0 || e.item >= ds.n_items)
      throw std::invalid_argument("rating entry out of range");
}

// Per-row residual of the neighborhood pull: rho_u = P_u - sum w_uv P_v.
Matrix pull_residuals(const Matrix& factors, const NeighborGraph& graph) {
  Matrix rho = factors;
  for (std::int32_t i = 0; i < graph.n_entities; ++i)
    for (const auto& nb : graph.neighbors[i]) rho.row(i) -= nb.weight * factors.row(nb.index);
  return rho;
}

}  // namespace

Real predict_rating(const FactorModel& model, std::int32_t u, std::int32_t i, bool clamp) {
  if (u < 0 || u >= model.n_users() || i < 0 || i >= model.n_items())
    throw std::out_of_range("prediction index out of range");
  Real value = model.offset + model.user_factors.row(u).dot(model.item_factors.row(i));
  if (clamp) value = std::clamp(value, model.scale_min, model.scale_max);
  return value;
}

Real objective_value(const FactorModel& model, const RatingDataset& ds,
                     const NeighborGraph* user_graph, const NeighborGraph* item_graph,
                     const TrainConfig& cfg) {
  check_shapes(model, ds);
  check_entries(ds);
  if (!model.user_factors.allFinite() || !model.item_factors.allFinite() ||
      !std::isfinite(model.offset))
    throw std::domain_error("model contains non-finite entries");
  auto [alpha, beta] = effective_coupling(cfg);
  if (alpha > 0.0) check_graph(user_graph, ds.n_users, "user");
  if (beta > 0.0) check_graph(item_graph, ds.n_items, "item");

  Real loss = 0.0;
  for (const auto& e : ds.entries) {
    Real err = e.value - model.offset -
               model.user_factors.row(e.user).dot(model.item_factors.row(e.item));
    loss += err * err;
  }
  loss *= 0.5;

  loss += 0.5 * cfg.lambda *
          (model.user_factors.squaredNorm() + model.item_factors.squaredNorm());

  if (alpha > 0.0)
    loss += 0.5 * alpha * pull_residuals(model.user_factors, *user_graph).squaredNorm();
  if (beta > 0.0)
    loss += 0.5 * beta * pull_residuals(model.item_factors, *item_graph).squaredNorm();
  return loss;
}

Gradients gradients(const FactorModel& model, const RatingDataset& ds,
                    const NeighborGraph* user_graph, const NeighborGraph* item_graph,
                    const TrainConfig& cfg) {
  check_shapes(model, ds);
  check_entries(ds);
  if (!model.user_factors.allFinite() || !model.item_factors.allFinite() ||
      !std::isfinite(model.offset))
    throw std::domain_error("model contains non-finite entries");
  auto [alpha, beta] = effective_coupling(cfg);
  if (alpha > 0.0) check_graph(user_graph, ds.n_users, "user");
  if (beta > 0.0) check_graph(item_graph, ds.n_items, "item");

  const Matrix& P = model.user_factors;
  const Matrix& Q = model.item_factors;
  Gradients g;
  g.user = cfg.lambda * P;
  g.item = cfg.lambda * Q;

  for (const auto& e : ds.entries) {
    Real err = model.offset + P.row(e.user).dot(Q.row(e.item)) - e.value;
    g.user.row(e.user) += err * Q.row(e.item);
    g.item.row(e.item) += err * P.row(e.user);
  }

  // Each residual rho_v pulls its own row forward and pushes every row that
  // appears in v's neighbor list back by the stored (asymmetric) weight.
  if (alpha > 0.0) {
    Matrix rho = pull_residuals(P, *user_graph);
    g.user += alpha * rho;
    for (std::int32_t v = 0; v < user_graph->n_entities; ++v)
      for (const auto& nb : user_graph->neighbors[v])
        g.user.row(nb.index) -= alpha * nb.weight * rho.row(v);
  }
  if (beta > 0.0) {
    Matrix rho = pull_residuals(Q, *item_graph);
    g.item += beta * rho;
    for (std::int32_t v = 0; v < item_graph->n_entities; ++v)
      for (const auto& nb : item_graph->neighbors[v])
        g.item.row(nb.index) -= beta * nb.weight * rho.row(v);
  }
  return g;
}

TrainResult train(const RatingDataset& ds, const NeighborGraph* user_graph,
                  const NeighborGraph* item_graph, const TrainConfig& cfg) {
  if (cfg.dim < 1) throw ConfigError("latent dimension must be at least 1");
  if (cfg.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (cfg.alpha < 0.0) throw ConfigError("alpha must be non-negative");
  if (cfg.beta < 0.0) throw ConfigError("beta must be non-negative");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(cfg.convergence_tol > 0.0)) throw ConfigError("convergence_tol must be positive");
  if (ds.n_users < 1 || ds.n_items < 1) throw ConfigError("dataset has no entities");
  if (ds.entries.empty()) throw ConfigError("cannot train on an empty dataset");
  check_entries(ds);

  auto [alpha, beta] = effective_coupling(cfg);
  if (alpha > 0.0) check_graph(user_graph, ds.n_users, "user");
  if (beta > 0.0) check_graph(item_graph, ds.n_items, "item");
  TrainConfig eff = cfg;
  eff.alpha = alpha;
  eff.beta = beta;

  FactorModel model;
  model.scale_min = ds.scale_min;
  model.scale_max = ds.scale_max;
  if (cfg.variant == Variant::RSVD) {
    model.offset = 0.0;
  } else {
    long double sum = 0.0L;
    for (const auto& e : ds.entries) sum += e.value;
    model.offset = static_cast<Real>(sum / ds.entries.size());
  }

  // Row-major draw order, P before Q, so the initialization is reproducible
  // from the seed alone.
  Rng rng(cfg.seed);
  model.user_factors.resize(ds.n_users, cfg.dim);
  model.item_factors.resize(ds.n_items, cfg.dim);
  for (std::int32_t r = 0; r < ds.n_users; ++r)
    for (std::int32_t c = 0; c < cfg.dim; ++c)
      model.user_factors(r, c) = rng.uniform(-0.05, 0.05);
  for (std::int32_t r = 0; r < ds.n_items; ++r)
    for (std::int32_t c = 0; c < cfg.dim; ++c)
      model.item_factors(r, c) = rng.uniform(-0.05, 0.05);

  TrainTrace trace;
  Real prev = objective_value(model, ds, user_graph, item_graph, eff);
  Real eta = cfg.learning_rate;

  for (std::int32_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    auto started = std::chrono::steady_clock::now();
    Gradients g = gradients(model, ds, user_graph, item_graph, eff);
    Real gradient_norm = std::sqrt(g.user.squaredNorm() + g.item.squaredNorm());

    // Step halving: retry the same gradient with smaller eta until the
    // objective stops increasing. eta is never grown back.
    FactorModel candidate = model;
    Real current = prev;
    while (true) {
      candidate.user_factors = model.user_factors - eta * g.user;
      candidate.item_factors = model.item_factors - eta * g.item;
      bool finite = candidate.user_factors.allFinite() && candidate.item_factors.allFinite();
      current = finite ? objective_value(candidate, ds, user_graph, item_graph, eff)
                       : std::numeric_limits<Real>::quiet_NaN();
      if (std::isfinite(current) && current <= prev) break;
      eta *= 0.5;
      if (eta < 1e-12) {
        if (!std::isfinite(current))
          throw TrainingFailure(
              "training diverged: objective non-finite with the step size exhausted",
              trace);
        // Finite but impossible to decrease: accept the current model as
        // converged rather than looping forever.
        return {model, trace};
      }
    }

    model.user_factors = std::move(candidate.user_factors);
    model.item_factors = std::move(candidate.item_factors);
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                         .count();
    trace.epochs.push_back({current, gradient_norm, seconds});

    Real relative_drop = (prev - current) / std::max(prev, 1.0);
    prev = current;
    if (relative_drop < cfg.convergence_tol) break;
  }
  return {model, trace};
}

}  // namespace cmf
