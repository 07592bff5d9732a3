#include "cmf/evaluation.hpp"

#include "cmf/coupling.hpp"
#include "cmf/errors.hpp"
#include "cmf/factorization.hpp"
#include "cmf/io.hpp"
#include "cmf/neighborhood.hpp"
#include "cmf/ratings_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>

namespace cmf {

Real mae(std::span<const Real> pred, std::span<const Real> truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("mae needs equal, nonzero-length inputs");
  Real sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - truth[i]);
  return sum / static_cast<Real>(pred.size());
}

Real rmse(std::span<const Real> pred, std::span<const Real> truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("rmse needs equal, nonzero-length inputs");
  Real sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Real d = pred[i] - truth[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<Real>(pred.size()));
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Constant: return "Constant";
    case Method::PMF: return "PMF";
    case Method::RSVD: return "RSVD";
    case Method::ISMF: return "ISMF";
    case Method::UBCF: return "UBCF";
    case Method::IBCF: return "IBCF";
    case Method::PSMF: return "PSMF";
    case Method::CSMF: return "CSMF";
    case Method::JSMF: return "JSMF";
    case Method::CMF: return "CMF";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::Constant, Method::PMF, Method::RSVD, Method::ISMF, Method::UBCF,
                   Method::IBCF, Method::PSMF, Method::CSMF, Method::JSMF, Method::CMF})
    if (name == method_name(m)) return m;
  throw ConfigError("unknown method '" + name + "'");
}

std::uint64_t fold_signature(const FoldAssignment& folds) {
  // FNV-1a over the whole assignment.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(folds.n_folds));
  mix(folds.seed);
  for (std::int32_t f : folds.fold_of) mix(static_cast<std::uint64_t>(f));
  return h;
}

namespace {

bool is_factor_method(Method m) {
  return m != Method::Constant && m != Method::UBCF && m != Method::IBCF;
}

Variant variant_for(Method m) {
  switch (m) {
    case Method::PMF: return Variant::PMF;
    case Method::RSVD: return Variant::RSVD;
    case Method::ISMF: return Variant::ISMF;
    case Method::PSMF: return Variant::PSMF;
    case Method::CSMF: return Variant::CSMF;
    case Method::JSMF: return Variant::JSMF;
    case Method::CMF: return Variant::CMF;
    default: throw std::logic_error("method has no factorization variant");
  }
}

// Attribute-similarity kind wired in by each hybrid / coupled variant.
std::optional<SimilarityKind> attribute_kind_for(Method m) {
  switch (m) {
    case Method::CMF: return SimilarityKind::Coupled;
    case Method::PSMF: return SimilarityKind::Pearson;
    case Method::CSMF: return SimilarityKind::Cosine;
    case Method::JSMF: return SimilarityKind::Jaccard;
    default: return std::nullopt;
  }
}

NeighborGraph normalized_copy(const NeighborGraph& raw) {
  NeighborGraph graph = raw;
  graph.normalized = true;
  for (auto& list : graph.neighbors) {
    Real sum = 0.0;
    for (const auto& nb : list) sum += nb.weight;
    if (sum > 0.0) {
      for (auto& nb : list) nb.weight /= sum;
    } else {
      list.clear();
    }
  }
  return graph;
}

struct FoldSlice {
  RatingDataset train;
  std::vector<RatingEntry> test;
};

// Lazily built shared state: fold slices, per-fold indices and rating
// graphs, fold-invariant attribute graphs.
struct StudyContext {
  const RatingDataset& ds;
  const AttributeTable& users;
  const AttributeTable& items;
  const ExperimentConfig& cfg;
  const FoldAssignment& folds;

  std::vector<FoldSlice> slices;
  std::vector<std::optional<RatingsIndex>> indices;
  std::vector<std::optional<NeighborGraph>> user_raw, item_raw;    // rating graphs
  std::vector<std::optional<NeighborGraph>> user_norm, item_norm;  // normalized
  std::map<SimilarityKind, NeighborGraph> user_attr, item_attr;    // fold-invariant

  StudyContext(const RatingDataset& ds_, const AttributeTable& users_,
               const AttributeTable& items_, const ExperimentConfig& cfg_,
               const FoldAssignment& folds_)
      : ds(ds_), users(users_), items(items_), cfg(cfg_), folds(folds_) {
    if (folds.n_folds < 2) throw std::invalid_argument("need at least two folds");
    if (folds.fold_of.size() != ds.entries.size())
      throw std::invalid_argument("fold assignment does not match the dataset");
    if (users.n_entities != ds.n_users)
      throw std::invalid_argument("user attribute table does not match the dataset");
    if (items.n_entities != ds.n_items)
      throw std::invalid_argument("item attribute table does not match the dataset");

    slices.resize(folds.n_folds);
    for (std::int32_t f = 0; f < folds.n_folds; ++f) {
      auto& s = slices[f];
      s.train.n_users = ds.n_users;
      s.train.n_items = ds.n_items;
      s.train.scale_min = ds.scale_min;
      s.train.scale_max = ds.scale_max;
    }
    for (std::size_t e = 0; e < ds.entries.size(); ++e) {
      std::int32_t f = folds.fold_of[e];
      if (f < 0 || f >= folds.n_folds) throw std::invalid_argument("fold id out of range");
      for (std::int32_t g = 0; g < folds.n_folds; ++g) {
        if (g == f)
          slices[g].test.push_back(ds.entries[e]);
        else
          slices[g].train.entries.push_back(ds.entries[e]);
      }
    }
    for (auto& s : slices) {
      s.train.update_global_mean();
      if (s.train.entries.empty() || s.test.empty())
        throw std::invalid_argument("every fold needs both training and test entries");
    }
    indices.resize(folds.n_folds);
    user_raw.resize(folds.n_folds);
    item_raw.resize(folds.n_folds);
    user_norm.resize(folds.n_folds);
    item_norm.resize(folds.n_folds);
  }

  const RatingsIndex& index(std::int32_t f) {
    if (!indices[f]) indices[f].emplace(slices[f].train);
    return *indices[f];
  }

  // Rating-Pearson graphs come from training entries of the fold only.
  const NeighborGraph& rating_graph(std::int32_t f, Axis axis, bool normalized) {
    auto& raw = axis == Axis::User ? user_raw[f] : item_raw[f];
    if (!raw)
      raw = rating_neighbor_graph(index(f), axis, cfg.k_neighbors, false, false,
                                  cfg.graph_threads);
    if (!normalized) return *raw;
    auto& norm = axis == Axis::User ? user_norm[f] : item_norm[f];
    if (!norm) norm = normalized_copy(*raw);
    return *norm;
  }

  const NeighborGraph& attribute_graph(Axis axis, SimilarityKind kind) {
    auto& cache = axis == Axis::User ? user_attr : item_attr;
    auto it = cache.find(kind);
    if (it == cache.end()) {
      const AttributeTable& table = axis == Axis::User ? users : items;
      it = cache
               .emplace(kind, attribute_neighbor_graph(table, kind, cfg.k_neighbors, true,
                                                       cfg.graph_threads))
               .first;
    }
    return it->second;
  }
};

std::string build_config_echo(const ExperimentConfig& cfg, const FoldAssignment& folds) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "d=%d lambda=%s alpha=%s beta=%s eta=%s max_epochs=%d tol=%s seed=%llu "
                "K=%d folds=%d fold_seed=%llu",
                cfg.train.dim, format_real(cfg.train.lambda, 15).c_str(),
                format_real(cfg.train.alpha, 15).c_str(),
                format_real(cfg.train.beta, 15).c_str(),
                format_real(cfg.train.learning_rate, 15).c_str(), cfg.train.max_epochs,
                format_real(cfg.train.convergence_tol, 15).c_str(),
                static_cast<unsigned long long>(cfg.train.seed), cfg.k_neighbors,
                folds.n_folds, static_cast<unsigned long long>(folds.seed));
  return buf;
}

FoldMetrics evaluate_fold(StudyContext& ctx, Method method, std::int32_t f) {
  const FoldSlice& slice = ctx.slices[f];
  std::vector<Real> pred;
  std::vector<Real> truth;
  pred.reserve(slice.test.size());
  truth.reserve(slice.test.size());

  if (method == Method::Constant) {
    Real mean = std::clamp(slice.train.global_mean, ctx.ds.scale_min, ctx.ds.scale_max);
    for (const auto& e : slice.test) {
      pred.push_back(mean);
      truth.push_back(e.value);
    }
  } else if (method == Method::UBCF) {
    const RatingsIndex& index = ctx.index(f);
    const NeighborGraph& graph = ctx.rating_graph(f, Axis::User, false);
    for (const auto& e : slice.test) {
      pred.push_back(predict_ubcf(index, graph, e.user, e.item));
      truth.push_back(e.value);
    }
  } else if (method == Method::IBCF) {
    const RatingsIndex& index = ctx.index(f);
    const NeighborGraph& graph = ctx.rating_graph(f, Axis::Item, false);
    for (const auto& e : slice.test) {
      pred.push_back(predict_ibcf(index, graph, e.user, e.item));
      truth.push_back(e.value);
    }
  } else {
    TrainConfig train_cfg = ctx.cfg.train;
    train_cfg.variant = variant_for(method);
    const NeighborGraph* user_graph = nullptr;
    const NeighborGraph* item_graph = nullptr;
    if (method == Method::ISMF) {
      if (train_cfg.alpha > 0.0) user_graph = &ctx.rating_graph(f, Axis::User, true);
      if (train_cfg.beta > 0.0) item_graph = &ctx.rating_graph(f, Axis::Item, true);
    } else if (auto kind = attribute_kind_for(method)) {
      if (train_cfg.alpha > 0.0) user_graph = &ctx.attribute_graph(Axis::User, *kind);
      if (train_cfg.beta > 0.0) item_graph = &ctx.attribute_graph(Axis::Item, *kind);
    }
    TrainResult result;
    try {
      result = train(slice.train, user_graph, item_graph, train_cfg);
    } catch (const TrainingFailure& failure) {
      throw TrainingFailure("fold " + std::to_string(f) + ": " + failure.what(),
                            failure.trace());
    }
    for (const auto& e : slice.test) {
      pred.push_back(predict_rating(result.model, e.user, e.item, true));
      truth.push_back(e.value);
    }
  }

  return {mae(pred, truth), rmse(pred, truth)};
}

void finalize_report(EvalReport& report) {
  const std::size_t n = report.folds.size();
  Real mae_sum = 0.0, rmse_sum = 0.0;
  for (const auto& f : report.folds) {
    mae_sum += f.mae;
    rmse_sum += f.rmse;
  }
  report.mae_mean = mae_sum / static_cast<Real>(n);
  report.rmse_mean = rmse_sum / static_cast<Real>(n);
  Real mae_var = 0.0, rmse_var = 0.0;
  for (const auto& f : report.folds) {
    mae_var += (f.mae - report.mae_mean) * (f.mae - report.mae_mean);
    rmse_var += (f.rmse - report.rmse_mean) * (f.rmse - report.rmse_mean);
  }
  report.mae_stddev = n > 1 ? std::sqrt(mae_var / static_cast<Real>(n - 1)) : 0.0;
  report.rmse_stddev = n > 1 ? std::sqrt(rmse_var / static_cast<Real>(n - 1)) : 0.0;
}

}  // namespace

std::vector<EvalReport> run_study(const RatingDataset& ds, const AttributeTable& users,
                                  const AttributeTable& items,
                                  const std::vector<Method>& methods,
                                  const ExperimentConfig& cfg, const FoldAssignment& folds) {
  if (methods.empty()) throw std::invalid_argument("no methods requested");
  if (cfg.k_neighbors < 1) throw ConfigError("k_neighbors must be at least 1");

  StudyContext ctx(ds, users, items, cfg, folds);
  const std::string echo = build_config_echo(cfg, folds);
  const std::uint64_t signature = fold_signature(folds);

  std::vector<EvalReport> reports;
  reports.reserve(methods.size());
  for (Method method : methods) {
    EvalReport report;
    report.dataset = cfg.dataset_name;
    report.method = method;
    report.dim = is_factor_method(method) ? cfg.train.dim : -1;
    report.config_echo = echo;
    report.fold_signature = signature;
    for (std::int32_t f = 0; f < folds.n_folds; ++f)
      report.folds.push_back(evaluate_fold(ctx, method, f));
    finalize_report(report);
    reports.push_back(std::move(report));
  }
  return reports;
}

EvalReport run_cv_experiment(const RatingDataset& ds, const AttributeTable& users,
                             const AttributeTable& items, Method method,
                             const ExperimentConfig& cfg, const FoldAssignment& folds) {
  return run_study(ds, users, items, {method}, cfg, folds).front();
}

namespace {

void check_comparable(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to compare");
  for (const auto& r : reports) {
    if (r.dataset != reports.front().dataset)
      throw std::invalid_argument("reports span different datasets");
    if (r.fold_signature != reports.front().fold_signature)
      throw std::invalid_argument("reports use different fold assignments");
  }
}

const EvalReport* find_report(const std::vector<EvalReport>& reports, Method m,
                              std::int32_t dim) {
  const EvalReport* dimless = nullptr;
  for (const auto& r : reports) {
    if (r.method != m) continue;
    if (r.dim == dim) return &r;
    if (r.dim == -1) dimless = &r;
  }
  return dimless;
}

std::string percent(Real baseline, Real target) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", (baseline - target) / target * 100.0);
  return buf;
}

}  // namespace

std::string emit_comparison(const std::vector<EvalReport>& reports,
                            const std::vector<Method>& baselines, Method target) {
  check_comparable(reports);

  std::vector<std::int32_t> dims;
  for (const auto& r : reports)
    if (r.method == target) dims.push_back(r.dim);
  if (dims.empty()) throw std::invalid_argument("target method missing from the reports");
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());

  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "dataset %s  folds %zu  target %s\n",
                reports.front().dataset.c_str(), reports.front().folds.size(),
                method_name(target));
  out += buf;
  out += "improvement = (baseline - target) / target\n";

  for (std::int32_t d : dims) {
    const EvalReport* tgt = find_report(reports, target, d);
    if (d >= 0)
      std::snprintf(buf, sizeof(buf), "\nd = %d\n", d);
    else
      std::snprintf(buf, sizeof(buf), "\n(no latent dimension)\n");
    out += buf;
    std::snprintf(buf, sizeof(buf), "  %-10s %9s %9s %9s %9s\n", "method", "MAE", "improve",
                  "RMSE", "improve");
    out += buf;
    std::snprintf(buf, sizeof(buf), "* %-10s %9.4f %9s %9.4f %9s\n", method_name(target),
                  tgt->mae_mean, "--", tgt->rmse_mean, "--");
    out += buf;
    for (Method b : baselines) {
      if (b == target) continue;
      const EvalReport* base = find_report(reports, b, d);
      if (!base) continue;
      std::snprintf(buf, sizeof(buf), "  %-10s %9.4f %9s %9.4f %9s\n", method_name(b),
                    base->mae_mean, percent(base->mae_mean, tgt->mae_mean).c_str(),
                    base->rmse_mean, percent(base->rmse_mean, tgt->rmse_mean).c_str());
      out += buf;
    }
  }
  return out;
}

std::string comparison_csv(const std::vector<EvalReport>& reports,
                           const std::vector<Method>& baselines, Method target) {
  check_comparable(reports);

  std::vector<std::int32_t> dims;
  for (const auto& r : reports)
    if (r.method == target) dims.push_back(r.dim);
  if (dims.empty()) throw std::invalid_argument("target method missing from the reports");
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());

  std::string out = "d,metric,method,value,improve_pct\n";
  char buf[32];
  for (std::int32_t d : dims) {
    const EvalReport* tgt = find_report(reports, target, d);
    const std::string dim_text = d >= 0 ? std::to_string(d) : "";
    auto append = [&](const char* metric, const EvalReport* r, Real value, Real target_value) {
      out += dim_text + "," + metric + "," + method_name(r->method) + "," +
             format_real(value, 17) + ",";
      if (r->method != target) {
        std::snprintf(buf, sizeof(buf), "%.2f", (value - target_value) / target_value * 100.0);
        out += buf;
      }
      out += '\n';
    };
    append("mae", tgt, tgt->mae_mean, tgt->mae_mean);
    append("rmse", tgt, tgt->rmse_mean, tgt->rmse_mean);
    for (Method b : baselines) {
      if (b == target) continue;
      const EvalReport* base = find_report(reports, b, d);
      if (!base) continue;
      append("mae", base, base->mae_mean, tgt->mae_mean);
      append("rmse", base, base->rmse_mean, tgt->rmse_mean);
    }
  }
  return out;
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports");
  for (const auto& r : reports) {
    if (r.fold_signature != reports.front().fold_signature)
      throw std::invalid_argument("reports use different fold assignments");
    if (r.dataset.find(',') != std::string::npos ||
        r.dataset.find('\n') != std::string::npos)
      throw ConfigError("dataset name contains a comma or newline");
  }
  std::string out;
  out += "# fold_signature " + std::to_string(reports.front().fold_signature) + "\n";
  if (!reports.front().config_echo.empty())
    out += "# config " + reports.front().config_echo + "\n";
  out += "dataset,method,d,fold,mae,rmse\n";
  for (const auto& r : reports) {
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
      out += r.dataset;
      out += ',';
      out += method_name(r.method);
      out += ',';
      if (r.dim >= 0) out += std::to_string(r.dim);
      out += ',';
      out += std::to_string(f);
      out += ',';
      out += format_real(r.folds[f].mae, 17);
      out += ',';
      out += format_real(r.folds[f].rmse, 17);
      out += '\n';
    }
  }
  return out;
}

std::vector<EvalReport> parse_report_csv(const std::string& text) {
  const std::string path = "report_csv";
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
    start = end + 1;
  }

  std::uint64_t signature = 0;
  std::string config_echo;
  std::size_t i = 0;
  for (; i < lines.size() && !lines[i].empty() && lines[i][0] == '#'; ++i) {
    std::string rest = lines[i].size() >= 2 && lines[i][1] == ' ' ? lines[i].substr(2)
                                                                  : lines[i].substr(1);
    std::size_t space = rest.find(' ');
    std::string key = rest.substr(0, space);
    std::string value = space == std::string::npos ? "" : rest.substr(space + 1);
    if (key == "fold_signature") signature = std::strtoull(value.c_str(), nullptr, 10);
    if (key == "config") config_echo = value;
  }
  if (i >= lines.size() || lines[i] != "dataset,method,d,fold,mae,rmse")
    throw ParseError(path, i + 1, "expected header 'dataset,method,d,fold,mae,rmse'");

  struct Key {
    std::string dataset;
    Method method;
    std::int32_t dim;
    bool operator==(const Key& o) const {
      return dataset == o.dataset && method == o.method && dim == o.dim;
    }
  };
  std::vector<Key> order;
  std::vector<std::vector<std::pair<std::int64_t, FoldMetrics>>> folds_by_key;

  for (++i; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = lines[i].find(',', pos);
      fields.push_back(
          lines[i].substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (fields.size() != 6) throw ParseError(path, i + 1, "expected 6 fields");

    Key key;
    key.dataset = fields[0];
    key.method = method_from_name(fields[1]);
    key.dim = fields[2].empty() ? -1 : static_cast<std::int32_t>(std::stol(fields[2]));
    std::int64_t fold = 0;
    FoldMetrics metrics;
    try {
      fold = std::stoll(fields[3]);
      metrics.mae = std::stod(fields[4]);
      metrics.rmse = std::stod(fields[5]);
    } catch (const std::exception&) {
      throw ParseError(path, i + 1, "bad numeric field");
    }

    std::size_t slot = 0;
    for (; slot < order.size(); ++slot)
      if (order[slot] == key) break;
    if (slot == order.size()) {
      order.push_back(key);
      folds_by_key.emplace_back();
    }
    folds_by_key[slot].push_back({fold, metrics});
  }

  std::vector<EvalReport> reports;
  for (std::size_t s = 0; s < order.size(); ++s) {
    EvalReport report;
    report.dataset = order[s].dataset;
    report.method = order[s].method;
    report.dim = order[s].dim;
    report.fold_signature = signature;
    report.config_echo = config_echo;
    std::sort(folds_by_key[s].begin(), folds_by_key[s].end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [fold, metrics] : folds_by_key[s]) report.folds.push_back(metrics);
    if (report.folds.empty()) continue;
    finalize_report(report);
    reports.push_back(std::move(report));
  }
  return reports;
}

std::string summary_table(const std::vector<EvalReport>& reports) {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-14s %-9s %4s %6s %9s %9s %9s %9s\n", "dataset", "method",
                "d", "folds", "MAE", "sd", "RMSE", "sd");
  out += buf;
  for (const auto& r : reports) {
    std::string dim_text = r.dim >= 0 ? std::to_string(r.dim) : "-";
    std::snprintf(buf, sizeof(buf), "%-14s %-9s %4s %6zu %9.4f %9.4f %9.4f %9.4f\n",
                  r.dataset.c_str(), method_name(r.method), dim_text.c_str(), r.folds.size(),
                  r.mae_mean, r.mae_stddev, r.rmse_mean, r.rmse_stddev);
    out += buf;
  }
  return out;
}

}  // namespace cmf
