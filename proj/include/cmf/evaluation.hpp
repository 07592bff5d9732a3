#pragma once

#include "cmf/ingest.hpp"
#include "cmf/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace cmf {

Real mae(std::span<const Real> pred, std::span<const Real> truth);
Real rmse(std::span<const Real> pred, std::span<const Real> truth);

/// Everything the cross-validation harness can run. Constant predicts the
/// training mean for every pair and exists as a sanity baseline.
enum class Method { Constant, PMF, RSVD, ISMF, UBCF, IBCF, PSMF, CSMF, JSMF, CMF };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

struct FoldMetrics {
  Real mae = 0.0;
  Real rmse = 0.0;
};

struct EvalReport {
  std::string dataset;
  Method method = Method::Constant;
  std::int32_t dim = -1;  // -1 when the method has no latent dimension
  std::vector<FoldMetrics> folds;
  Real mae_mean = 0.0;
  Real mae_stddev = 0.0;
  Real rmse_mean = 0.0;
  Real rmse_stddev = 0.0;
  std::string config_echo;
  std::uint64_t fold_signature = 0;  // hash of the fold assignment
};

std::uint64_t fold_signature(const FoldAssignment& folds);

struct ExperimentConfig {
  TrainConfig train;
  std::int32_t k_neighbors = 50;
  std::int32_t graph_threads = 0;
  std::string dataset_name = "dataset";
};

/// Cross-validated run of one method: per fold, trains on the complement,
/// predicts (clamped) on the fold, and records MAE / RMSE. Attribute-based
/// graphs are built once from the tables (fold-invariant); rating-based
/// graphs are rebuilt per fold from training entries only. A TrainingFailure
/// in any fold propagates with the fold id prepended.
EvalReport run_cv_experiment(const RatingDataset& ds, const AttributeTable& users,
                             const AttributeTable& items, Method method,
                             const ExperimentConfig& cfg, const FoldAssignment& folds);

/// run_cv_experiment over several methods, sharing fold-invariant graphs.
std::vector<EvalReport> run_study(const RatingDataset& ds, const AttributeTable& users,
                                  const AttributeTable& items,
                                  const std::vector<Method>& methods,
                                  const ExperimentConfig& cfg, const FoldAssignment& folds);

/// Aligned plain-text comparison of baselines against a target method,
/// one block per latent dimension. Improvement is printed as
/// (baseline - target) / target * 100; target cells are marked with '*'.
/// Reports must share dataset and fold assignment (std::invalid_argument).
std::string emit_comparison(const std::vector<EvalReport>& reports,
                            const std::vector<Method>& baselines, Method target);

/// CSV form of the same comparison: d,metric,method,value,improve_pct.
std::string comparison_csv(const std::vector<EvalReport>& reports,
                           const std::vector<Method>& baselines, Method target);

/// Per-fold rows: dataset,method,d,fold,mae,rmse (d empty when -1).
std::string report_csv(const std::vector<EvalReport>& reports);
std::vector<EvalReport> parse_report_csv(const std::string& text);

/// Human-readable aggregate table for a set of reports.
std::string summary_table(const std::vector<EvalReport>& reports);

}  // namespace cmf
