#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace cmf {

using Real = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

/// One observed rating, indices 0-based and dense.
struct RatingEntry {
  std::int32_t user = 0;
  std::int32_t item = 0;
  Real value = 0.0;
};

/// Sparse set of observed ratings plus the entity counts that define the
/// index space. Entities listed in attribute files but never rated still
/// count toward n_users / n_items.
struct RatingDataset {
  std::int32_t n_users = 0;
  std::int32_t n_items = 0;
  std::vector<RatingEntry> entries;
  Real scale_min = 1.0;
  Real scale_max = 5.0;
  Real global_mean = 0.0;

  /// Recomputes global_mean from entries (compensated summation; empty -> 0).
  void update_global_mean();
};

/// Categorical attribute matrix for one entity class (users or items).
/// Value ids are dense per attribute, id 0 is always the missing sentinel
/// (vocab string ""), and every cell holds a valid id: absent source values
/// are stored as the sentinel, never skipped.
struct AttributeTable {
  std::int32_t n_entities = 0;
  std::vector<std::string> attribute_names;
  IntMatrix cells;  // n_entities x J value ids
  std::vector<std::vector<std::string>> vocab;  // per attribute, id -> string
  std::vector<std::int32_t> missing_id;         // per attribute (always 0 here)

  std::int32_t attribute_count() const {
    return static_cast<std::int32_t>(attribute_names.size());
  }
};

/// Builds an AttributeTable from raw string rows. Empty strings map to the
/// missing sentinel; other value ids are assigned in order of first
/// appearance, per attribute.
AttributeTable attribute_table_from_rows(
    const std::vector<std::string>& attribute_names,
    const std::vector<std::vector<std::string>>& rows);

struct FoldAssignment {
  std::int32_t n_folds = 0;
  std::vector<std::int32_t> fold_of;  // per rating entry
  std::uint64_t seed = 0;
};

struct Neighbor {
  std::int32_t index = 0;
  Real weight = 0.0;
};

/// Per-entity top-K weighted neighbor lists. Lists are sorted by descending
/// weight with ties broken by ascending index, never contain the entity
/// itself, and if `normalized` each non-empty list sums to 1.
struct NeighborGraph {
  std::int32_t n_entities = 0;
  std::vector<std::vector<Neighbor>> neighbors;
  bool normalized = false;
};

enum class Variant { CMF, PMF, RSVD, ISMF, PSMF, CSMF, JSMF };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);  // throws ConfigError

struct TrainConfig {
  std::int32_t dim = 10;
  Real lambda = 0.05;       // L2 weight on P and Q
  Real alpha = 0.0;         // user-neighborhood regularizer weight
  Real beta = 0.0;          // item-neighborhood regularizer weight
  Real learning_rate = 0.005;
  std::int32_t max_epochs = 200;
  Real convergence_tol = 1e-5;
  std::uint64_t seed = 1;
  Variant variant = Variant::CMF;
};

struct EpochStats {
  Real objective = 0.0;
  Real gradient_norm = 0.0;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochStats> epochs;  // one entry per accepted epoch
};

/// Latent factor model: prediction is offset + P_u . Q_i, clamped to the
/// rating scale at evaluation time only.
struct FactorModel {
  Matrix user_factors;  // n x d
  Matrix item_factors;  // m x d
  Real offset = 0.0;
  Real scale_min = 1.0;
  Real scale_max = 5.0;

  std::int32_t n_users() const { return static_cast<std::int32_t>(user_factors.rows()); }
  std::int32_t n_items() const { return static_cast<std::int32_t>(item_factors.rows()); }
  std::int32_t dim() const { return static_cast<std::int32_t>(user_factors.cols()); }
};

}  // namespace cmf
