// cmf: command-line front end for the coupled matrix factorization pipeline.
//
// Subcommands: prepare (raw dataset -> interchange files), couple (neighbor
// graph files), train (model + trace files), evaluate (cross-validated study
// -> CSV + summary), compare (comparison tables from report CSVs).

#include "cmf/coupling.hpp"
#include "cmf/errors.hpp"
#include "cmf/evaluation.hpp"
#include "cmf/factorization.hpp"
#include "cmf/ingest.hpp"
#include "cmf/io.hpp"
#include "cmf/ratings_index.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cmf;

namespace {

// ---------------------------------------------------------------------------
// RunConfig: `key = value` file mirroring TrainConfig plus pipeline settings.

struct RunConfig {
  std::optional<std::int32_t> d, max_epochs, k_neighbors, folds, threads;
  std::optional<Real> lambda, alpha, beta, learning_rate, convergence_tol;
  std::optional<std::uint64_t> seed, fold_seed, max_ratings;
  std::optional<std::string> variant, methods, dataset, input_dir, out_dir;
};

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::int64_t config_int(const std::string& key, const std::string& value, std::int64_t lo,
                        std::int64_t hi) {
  std::int64_t v = 0;
  try {
    std::size_t used = 0;
    v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad integer '" + value + "'");
  }
  if (v < lo || v > hi)
    throw ConfigError("config key '" + key + "': value " + value + " out of bounds");
  return v;
}

Real config_real(const std::string& key, const std::string& value, bool positive,
                 bool non_negative) {
  Real v = 0;
  try {
    std::size_t used = 0;
    v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad number '" + value + "'");
  }
  if (positive && !(v > 0)) throw ConfigError("config key '" + key + "' must be positive");
  if (non_negative && v < 0)
    throw ConfigError("config key '" + key + "' must be non-negative");
  return v;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  RunConfig rc;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");

    if (key == "d")
      rc.d = static_cast<std::int32_t>(config_int(key, value, 1, 1 << 20));
    else if (key == "lambda")
      rc.lambda = config_real(key, value, false, true);
    else if (key == "alpha")
      rc.alpha = config_real(key, value, false, true);
    else if (key == "beta")
      rc.beta = config_real(key, value, false, true);
    else if (key == "learning_rate")
      rc.learning_rate = config_real(key, value, true, false);
    else if (key == "max_epochs")
      rc.max_epochs = static_cast<std::int32_t>(config_int(key, value, 1, 1 << 24));
    else if (key == "convergence_tol")
      rc.convergence_tol = config_real(key, value, true, false);
    else if (key == "seed")
      rc.seed = static_cast<std::uint64_t>(config_int(key, value, 0, INT64_MAX));
    else if (key == "fold_seed")
      rc.fold_seed = static_cast<std::uint64_t>(config_int(key, value, 0, INT64_MAX));
    else if (key == "variant") {
      variant_from_name(value);  // validate early
      rc.variant = value;
    }
    else if (key == "k_neighbors")
      rc.k_neighbors = static_cast<std::int32_t>(config_int(key, value, 1, 1 << 24));
    else if (key == "folds")
      rc.folds = static_cast<std::int32_t>(config_int(key, value, 2, 1 << 20));
    else if (key == "threads")
      rc.threads = static_cast<std::int32_t>(config_int(key, value, 0, 1 << 16));
    else if (key == "max_ratings")
      rc.max_ratings = static_cast<std::uint64_t>(config_int(key, value, 0, INT64_MAX));
    else if (key == "methods")
      rc.methods = value;
    else if (key == "dataset")
      rc.dataset = value;
    else if (key == "input_dir")
      rc.input_dir = value;
    else if (key == "out_dir")
      rc.out_dir = value;
    else
      throw ConfigError("unknown config key '" + key + "'");
  }
  return rc;
}

// Flag > config > environment.
template <class T>
void fill(std::optional<T>& slot, const std::optional<T>& from_config) {
  if (!slot && from_config) slot = from_config;
}

std::optional<std::string> env_out_dir() {
  const char* v = std::getenv("CMF_OUT_DIR");
  if (v && *v) return std::string(v);
  return std::nullopt;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string part =
        trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!part.empty()) parts.push_back(part);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return parts;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string trainer_echo(const TrainConfig& cfg) {
  char buf[224];
  std::snprintf(buf, sizeof(buf), "d=%d lambda=%s alpha=%s beta=%s eta=%s max_epochs=%d tol=%s seed=%llu",
                cfg.dim, format_real(cfg.lambda, 15).c_str(), format_real(cfg.alpha, 15).c_str(),
                format_real(cfg.beta, 15).c_str(), format_real(cfg.learning_rate, 15).c_str(),
                cfg.max_epochs, format_real(cfg.convergence_tol, 15).c_str(),
                static_cast<unsigned long long>(cfg.seed));
  return buf;
}

// ---------------------------------------------------------------------------
// Shared option bundles.

struct TrainFlags {
  std::optional<std::int32_t> d, max_epochs;
  std::optional<Real> lambda, alpha, beta, learning_rate, convergence_tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
};

void add_train_flags(CLI::App* cmd, TrainFlags& flags) {
  cmd->add_option("--d", flags.d, "latent dimension");
  cmd->add_option("--lambda", flags.lambda, "L2 regularization weight");
  cmd->add_option("--alpha", flags.alpha, "user coupling weight");
  cmd->add_option("--beta", flags.beta, "item coupling weight");
  cmd->add_option("--eta", flags.learning_rate, "initial learning rate");
  cmd->add_option("--max-epochs", flags.max_epochs, "epoch budget");
  cmd->add_option("--tol", flags.convergence_tol, "relative convergence tolerance");
  cmd->add_option("--seed", flags.seed, "initialization seed");
  cmd->add_option("--variant", flags.variant, "CMF|PMF|RSVD|ISMF|PSMF|CSMF|JSMF");
}

TrainConfig merge_train_config(const TrainFlags& flags, const RunConfig& rc) {
  TrainConfig cfg;  // struct defaults are the documented defaults
  if (rc.d) cfg.dim = *rc.d;
  if (rc.lambda) cfg.lambda = *rc.lambda;
  if (rc.alpha) cfg.alpha = *rc.alpha;
  if (rc.beta) cfg.beta = *rc.beta;
  if (rc.learning_rate) cfg.learning_rate = *rc.learning_rate;
  if (rc.max_epochs) cfg.max_epochs = *rc.max_epochs;
  if (rc.convergence_tol) cfg.convergence_tol = *rc.convergence_tol;
  if (rc.seed) cfg.seed = *rc.seed;
  if (rc.variant) cfg.variant = variant_from_name(*rc.variant);
  if (flags.d) cfg.dim = *flags.d;
  if (flags.lambda) cfg.lambda = *flags.lambda;
  if (flags.alpha) cfg.alpha = *flags.alpha;
  if (flags.beta) cfg.beta = *flags.beta;
  if (flags.learning_rate) cfg.learning_rate = *flags.learning_rate;
  if (flags.max_epochs) cfg.max_epochs = *flags.max_epochs;
  if (flags.convergence_tol) cfg.convergence_tol = *flags.convergence_tol;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.variant) cfg.variant = variant_from_name(*flags.variant);

  if (cfg.dim < 1) throw ConfigError("d must be at least 1");
  if (cfg.lambda < 0) throw ConfigError("lambda must be non-negative");
  if (cfg.alpha < 0) throw ConfigError("alpha must be non-negative");
  if (cfg.beta < 0) throw ConfigError("beta must be non-negative");
  if (!(cfg.learning_rate > 0)) throw ConfigError("eta must be positive");
  if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(cfg.convergence_tol > 0)) throw ConfigError("tol must be positive");
  return cfg;
}

// ---------------------------------------------------------------------------
// prepare

int cmd_prepare(const std::string& dataset, const std::string& input,
                const std::string& out_dir, std::uint64_t max_ratings) {
  fs::create_directories(out_dir);
  RatingDataset ratings;
  AttributeTable users, items;

  if (dataset == "movielens") {
    MovielensData data = parse_movielens(input, max_ratings);
    ratings = std::move(data.ratings);
    users = std::move(data.users);
    items = std::move(data.items);
    std::printf("dataset movielens\n");
  } else if (dataset == "bookcrossing") {
    BookcrossingData data = parse_bookcrossing(input, max_ratings);
    ratings = std::move(data.ratings);
    users = std::move(data.users);
    items = std::move(data.items);
    std::printf("dataset bookcrossing\n");
    std::printf("raw_ratings %zu\n", data.stats.raw_ratings);
    std::printf("implicit_dropped %zu\n", data.stats.implicit_dropped);
    std::printf("unknown_isbn_dropped %zu\n", data.stats.unknown_isbn_dropped);
    std::printf("unknown_user_dropped %zu\n", data.stats.unknown_user_dropped);
    std::printf("duplicate_overwrites %zu\n", data.stats.duplicate_overwrites);
    std::printf("retained %zu\n", data.stats.retained);
    std::printf("note: user attributes are age bins and location_country "
                "(last component of the Location field)\n");
  } else {
    throw ConfigError("unknown dataset '" + dataset + "' (movielens|bookcrossing)");
  }

  if (ratings.entries.empty()) throw ConfigError("no usable ratings in " + input);

  save_ratings_tsv(ratings, (fs::path(out_dir) / "ratings.tsv").string());
  save_attributes_tsv(users, (fs::path(out_dir) / "user_attributes.tsv").string());
  save_attributes_tsv(items, (fs::path(out_dir) / "item_attributes.tsv").string());
  std::printf("users %d\n", ratings.n_users);
  std::printf("items %d\n", ratings.n_items);
  std::printf("ratings %zu\n", ratings.entries.size());
  std::printf("out %s\n", out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// couple

int cmd_couple(const std::string& data_dir, const std::string& entities,
               const std::string& kind_name, std::int32_t k, bool raw, std::int32_t threads,
               const std::string& out_file) {
  if (k < 1) throw ConfigError("K must be at least 1");
  if (entities != "users" && entities != "items")
    throw ConfigError("entities must be users or items");
  SimilarityKind kind = similarity_kind_from_name(kind_name);

  NeighborGraph graph;
  if (kind == SimilarityKind::RatingPearson) {
    RatingDataset ds = load_ratings_tsv((fs::path(data_dir) / "ratings.tsv").string());
    RatingsIndex index(ds);
    Axis axis = entities == "users" ? Axis::User : Axis::Item;
    graph = rating_neighbor_graph(index, axis, k, false, !raw, threads);
  } else {
    const char* file = entities == "users" ? "user_attributes.tsv" : "item_attributes.tsv";
    AttributeTable table = load_attributes_tsv((fs::path(data_dir) / file).string());
    graph = attribute_neighbor_graph(table, kind, k, !raw, threads);
  }
  save_neighbor_graph(graph, out_file);

  std::size_t min_len = graph.n_entities ? SIZE_MAX : 0, max_len = 0, total = 0;
  for (const auto& list : graph.neighbors) {
    min_len = std::min(min_len, list.size());
    max_len = std::max(max_len, list.size());
    total += list.size();
  }
  double mean_len = graph.n_entities ? static_cast<double>(total) / graph.n_entities : 0.0;
  std::printf("entities %s  kind %s  K %d  normalized %d\n", entities.c_str(),
              similarity_kind_name(kind), k, graph.normalized ? 1 : 0);
  std::printf("neighbors min %zu max %zu mean %.4f\n", min_len, max_len, mean_len);
  std::printf("out %s\n", out_file.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const std::string& data_dir, const TrainConfig& cfg,
              const std::string& user_graph_file, const std::string& item_graph_file,
              const std::string& out_file, const std::string& trace_file) {
  RatingDataset ds = load_ratings_tsv((fs::path(data_dir) / "ratings.tsv").string());

  std::optional<NeighborGraph> user_graph, item_graph;
  if (!user_graph_file.empty()) user_graph = load_neighbor_graph(user_graph_file);
  if (!item_graph_file.empty()) item_graph = load_neighbor_graph(item_graph_file);

  TrainResult result;
  try {
    result = train(ds, user_graph ? &*user_graph : nullptr,
                   item_graph ? &*item_graph : nullptr, cfg);
  } catch (const TrainingFailure& failure) {
    std::string path = trace_file.empty() ? out_file + ".trace.tsv" : trace_file;
    save_trace_tsv(failure.trace(), path);
    std::fprintf(stderr, "error: %s (trace written to %s)\n", failure.what(), path.c_str());
    return 1;
  }

  save_model(result.model, cfg.variant, trainer_echo(cfg), out_file);
  if (!trace_file.empty()) save_trace_tsv(result.trace, trace_file);

  std::printf("variant %s\n", variant_name(cfg.variant));
  std::printf("epochs %zu\n", result.trace.epochs.size());
  if (!result.trace.epochs.empty())
    std::printf("objective %s\n", format_real(result.trace.epochs.back().objective, 12).c_str());
  std::printf("model %s\n", out_file.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const std::string& data_dir, const std::vector<std::string>& method_names,
                 const ExperimentConfig& cfg, std::int32_t folds, std::uint64_t fold_seed,
                 const std::string& out_csv, const std::string& table_file) {
  if (method_names.empty()) throw ConfigError("no methods given");
  std::vector<Method> methods;
  for (const auto& name : method_names) methods.push_back(method_from_name(name));

  RatingDataset ds = load_ratings_tsv((fs::path(data_dir) / "ratings.tsv").string());
  AttributeTable users =
      load_attributes_tsv((fs::path(data_dir) / "user_attributes.tsv").string());
  AttributeTable items =
      load_attributes_tsv((fs::path(data_dir) / "item_attributes.tsv").string());

  FoldAssignment assignment = kfold_split(ds, folds, fold_seed);
  std::vector<EvalReport> reports = run_study(ds, users, items, methods, cfg, assignment);

  std::string csv = report_csv(reports);
  if (!out_csv.empty()) write_text(out_csv, csv);
  std::string table = summary_table(reports);
  if (!table_file.empty()) write_text(table_file, table);
  std::fputs(table.c_str(), stdout);
  if (!out_csv.empty()) std::printf("csv %s\n", out_csv.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// compare

int cmd_compare(const std::vector<std::string>& report_files, const std::string& target_name,
                const std::string& baselines_text, const std::string& out_file,
                const std::string& csv_file) {
  std::vector<EvalReport> reports;
  for (const auto& file : report_files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open report file " + file);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    for (auto& r : parse_report_csv(text)) reports.push_back(std::move(r));
  }

  Method target = method_from_name(target_name);
  std::vector<Method> baselines;
  if (!baselines_text.empty()) {
    for (const auto& name : split_commas(baselines_text))
      baselines.push_back(method_from_name(name));
  } else {
    for (const auto& r : reports) {
      if (r.method == target) continue;
      if (std::find(baselines.begin(), baselines.end(), r.method) == baselines.end())
        baselines.push_back(r.method);
    }
  }

  std::string table = emit_comparison(reports, baselines, target);
  std::fputs(table.c_str(), stdout);
  if (!out_file.empty()) write_text(out_file, table);
  if (!csv_file.empty()) write_text(csv_file, comparison_csv(reports, baselines, target));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coupled matrix factorization pipeline"};
  app.require_subcommand(1);

  std::string config_file;

  // prepare
  auto* prepare = app.add_subcommand("prepare", "parse a raw dataset into interchange files");
  prepare->add_option("--config", config_file, "key = value config file");
  std::string p_dataset, p_input, p_out;
  std::optional<std::uint64_t> p_max;
  prepare->add_option("--dataset", p_dataset, "movielens|bookcrossing");
  prepare->add_option("--input", p_input, "raw dataset directory");
  prepare->add_option("--out", p_out, "output directory");
  prepare->add_option("--max-ratings", p_max, "keep only the first N ratings");

  // couple
  auto* couple = app.add_subcommand("couple", "build and save a neighbor graph");
  std::string c_data, c_entities, c_kind = "coupled", c_out;
  std::optional<std::int32_t> c_k, c_threads;
  bool c_raw = false;
  couple->add_option("--config", config_file, "key = value config file");
  couple->add_option("--data", c_data, "prepared data directory")->required();
  couple->add_option("--entities", c_entities, "users|items")->required();
  couple->add_option("--kind", c_kind, "coupled|pearson|cosine|jaccard|rating_pearson");
  couple->add_option("--k", c_k, "neighbors per entity");
  couple->add_flag("--raw", c_raw, "keep raw weights (skip row normalization)");
  couple->add_option("--threads", c_threads, "worker threads (0 = hardware)");
  couple->add_option("--out", c_out, "output graph file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a factor model");
  std::string t_data, t_user_graph, t_item_graph, t_out, t_trace;
  TrainFlags t_flags;
  train_cmd->add_option("--config", config_file, "key = value config file");
  train_cmd->add_option("--data", t_data, "prepared data directory")->required();
  add_train_flags(train_cmd, t_flags);
  train_cmd->add_option("--user-graph", t_user_graph, "user neighbor graph file");
  train_cmd->add_option("--item-graph", t_item_graph, "item neighbor graph file");
  train_cmd->add_option("--out", t_out, "output model file");
  train_cmd->add_option("--trace", t_trace, "write the per-epoch trace here");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "cross-validated method study");
  std::string e_data, e_methods, e_out, e_table, e_name;
  TrainFlags e_flags;
  std::optional<std::int32_t> e_k, e_folds, e_threads;
  std::optional<std::uint64_t> e_fold_seed;
  evaluate->add_option("--config", config_file, "key = value config file");
  evaluate->add_option("--data", e_data, "prepared data directory")->required();
  evaluate->add_option("--methods", e_methods, "comma-separated method list");
  add_train_flags(evaluate, e_flags);
  evaluate->add_option("--k", e_k, "neighbors per entity");
  evaluate->add_option("--folds", e_folds, "number of folds");
  evaluate->add_option("--fold-seed", e_fold_seed, "fold assignment seed");
  evaluate->add_option("--threads", e_threads, "graph build threads");
  evaluate->add_option("--dataset-name", e_name, "dataset label for reports");
  evaluate->add_option("--out", e_out, "report CSV path");
  evaluate->add_option("--table", e_table, "also write the summary table here");

  // compare
  auto* compare = app.add_subcommand("compare", "comparison table from report CSVs");
  std::vector<std::string> m_reports;
  std::string m_target = "CMF", m_baselines, m_out, m_csv;
  compare->add_option("--config", config_file, "key = value config file");
  compare->add_option("--reports", m_reports, "report CSV files")->required();
  compare->add_option("--target", m_target, "target method");
  compare->add_option("--baselines", m_baselines, "comma-separated baseline methods");
  compare->add_option("--out", m_out, "write the plain-text table here");
  compare->add_option("--csv", m_csv, "write the CSV comparison here");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig rc;
    if (!config_file.empty()) rc = parse_run_config(config_file);

    if (prepare->parsed()) {
      std::string dataset = !p_dataset.empty() ? p_dataset : rc.dataset.value_or("");
      std::string input = !p_input.empty() ? p_input : rc.input_dir.value_or("");
      std::string out = !p_out.empty() ? p_out : rc.out_dir.value_or(env_out_dir().value_or(""));
      if (dataset.empty()) throw ConfigError("--dataset required");
      if (input.empty()) throw ConfigError("--input required");
      if (out.empty()) throw ConfigError("--out required (flag, config out_dir, or CMF_OUT_DIR)");
      std::uint64_t max_ratings = p_max.value_or(rc.max_ratings.value_or(0));
      return cmd_prepare(dataset, input, out, max_ratings);
    }

    if (couple->parsed()) {
      std::int32_t k = c_k.value_or(rc.k_neighbors.value_or(50));
      std::int32_t threads = c_threads.value_or(rc.threads.value_or(0));
      return cmd_couple(c_data, c_entities, c_kind, k, c_raw, threads, c_out);
    }

    if (train_cmd->parsed()) {
      TrainConfig cfg = merge_train_config(t_flags, rc);
      std::string out = t_out;
      if (out.empty()) {
        std::string dir = rc.out_dir.value_or(env_out_dir().value_or(""));
        if (dir.empty())
          throw ConfigError("--out required (flag, config out_dir, or CMF_OUT_DIR)");
        out = (fs::path(dir) / (std::string(variant_name(cfg.variant)) + "_model.tsv")).string();
      }
      return cmd_train(t_data, cfg, t_user_graph, t_item_graph, out, t_trace);
    }

    if (evaluate->parsed()) {
      ExperimentConfig cfg;
      cfg.train = merge_train_config(e_flags, rc);
      cfg.k_neighbors = e_k.value_or(rc.k_neighbors.value_or(50));
      if (cfg.k_neighbors < 1) throw ConfigError("K must be at least 1");
      cfg.graph_threads = e_threads.value_or(rc.threads.value_or(0));
      cfg.dataset_name = !e_name.empty() ? e_name : rc.dataset.value_or("dataset");
      std::int32_t folds = e_folds.value_or(rc.folds.value_or(5));
      std::uint64_t fold_seed = e_fold_seed.value_or(rc.fold_seed.value_or(42));
      std::string methods_text = !e_methods.empty() ? e_methods : rc.methods.value_or("");
      if (methods_text.empty()) throw ConfigError("--methods required");
      std::string out = e_out;
      if (out.empty()) {
        std::string dir = rc.out_dir.value_or(env_out_dir().value_or(""));
        if (!dir.empty()) out = (fs::path(dir) / "report.csv").string();
      }
      return cmd_evaluate(e_data, split_commas(methods_text), cfg, folds, fold_seed, out,
                          e_table);
    }

    if (compare->parsed())
      return cmd_compare(m_reports, m_target, m_baselines, m_out, m_csv);
  } catch (const std::exception& error) {
    std::fprintf(stderr, "error: %s\n", error.what());
    return 1;
  }
  return 0;
}
