// End-to-end tests for the cmf binary. The path to the built executable
// arrives via the CMF_BIN environment variable (set by the test harness);
// subcommands run through popen with stderr folded into the captured output.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cmf/coupling.hpp"
#include "cmf/errors.hpp"
#include "cmf/evaluation.hpp"
#include "cmf/io.hpp"
#include "cmf/types.hpp"

#include "util.hpp"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

using namespace cmf;

namespace {

struct CmdResult {
  int code = -1;
  std::string output;
};

std::string bin() {
  const char* path = std::getenv("CMF_BIN");
  REQUIRE_MESSAGE(path != nullptr, "CMF_BIN must point at the cmf executable");
  return path;
}

CmdResult run(const std::string& cmd) {
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult result;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) result.output.append(buf, n);
  int status = pclose(pipe);
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

// Small MovieLens-style directory: 6 users, 5 movies, a deterministic
// near-dense rating pattern. Returns the number of rating lines written.
std::size_t write_movielens_raw(const testutil::TempDir& dir) {
  std::string users;
  const char* genders[] = {"M", "F"};
  const char* ages[] = {"18", "25", "35"};
  for (int u = 1; u <= 6; ++u)
    users += std::to_string(u) + "::" + genders[u % 2] + "::" + ages[u % 3] +
             "::" + std::to_string(u % 4) + "::55" + std::to_string(100 + u) + "\n";
  testutil::write_file(dir.file("users.dat"), users);

  const char* genre[] = {"Comedy", "Drama|Romance", "Comedy", "Thriller", "Drama|Romance"};
  std::string movies;
  for (int i = 0; i < 5; ++i)
    movies += std::to_string(10 * (i + 1)) + "::Film " + std::to_string(i) +
              " (199" + std::to_string(i) + ")::" + genre[i] + "\n";
  testutil::write_file(dir.file("movies.dat"), movies);

  std::string ratings;
  std::size_t count = 0;
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 5; ++i) {
      if ((u + i) % 10 == 0) continue;  // leave a few cells unrated
      int value = 1 + (3 * u + 2 * i) % 5;
      ratings += std::to_string(u + 1) + "::" + std::to_string(10 * (i + 1)) +
                 "::" + std::to_string(value) + "::97830" + std::to_string(100 + count) + "\n";
      ++count;
    }
  testutil::write_file(dir.file("ratings.dat"), ratings);
  return count;
}

std::string shquote(const std::string& s) { return "\"" + s + "\""; }

}  // namespace

TEST_CASE("cli prepare: writes interchange files and reruns byte-identically") {
  testutil::TempDir raw("cli_raw");
  testutil::TempDir out("cli_prepared");
  std::size_t n_ratings = write_movielens_raw(raw);

  std::string cmd = bin() + " prepare --dataset movielens --input " + shquote(raw.path.string()) +
                    " --out " + shquote(out.path.string());
  CmdResult r = run(cmd);
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("dataset movielens") != std::string::npos);
  CHECK(r.output.find("users 6") != std::string::npos);
  CHECK(r.output.find("items 5") != std::string::npos);
  CHECK(r.output.find("ratings " + std::to_string(n_ratings)) != std::string::npos);

  RatingDataset ds = load_ratings_tsv(out.file("ratings.tsv"));
  CHECK(ds.n_users == 6);
  CHECK(ds.n_items == 5);
  CHECK(ds.entries.size() == n_ratings);
  AttributeTable users = load_attributes_tsv(out.file("user_attributes.tsv"));
  CHECK(users.attribute_names == std::vector<std::string>{"gender", "age", "occupation", "zipcode"});
  AttributeTable items = load_attributes_tsv(out.file("item_attributes.tsv"));
  CHECK(items.attribute_names == std::vector<std::string>{"genre"});
  CHECK(items.vocab[0][items.cells(1, 0)] == "Drama|Romance");

  std::string before_r = testutil::read_file(out.file("ratings.tsv"));
  std::string before_u = testutil::read_file(out.file("user_attributes.tsv"));
  std::string before_i = testutil::read_file(out.file("item_attributes.tsv"));
  REQUIRE(run(cmd).code == 0);
  CHECK(testutil::read_file(out.file("ratings.tsv")) == before_r);
  CHECK(testutil::read_file(out.file("user_attributes.tsv")) == before_u);
  CHECK(testutil::read_file(out.file("item_attributes.tsv")) == before_i);
}

TEST_CASE("cli prepare: failure paths") {
  testutil::TempDir raw("cli_raw_bad");
  testutil::TempDir out("cli_prepared_bad");
  write_movielens_raw(raw);

  SUBCASE("empty ratings file is an error") {
    testutil::write_file(raw.file("ratings.dat"), "");
    CmdResult r = run(bin() + " prepare --dataset movielens --input " + shquote(raw.path.string()) +
                      " --out " + shquote(out.path.string()));
    CHECK(r.code == 1);
    CHECK(r.output.find("error: no usable ratings") != std::string::npos);
  }
  SUBCASE("unknown dataset name") {
    CmdResult r = run(bin() + " prepare --dataset netflix --input " + shquote(raw.path.string()) +
                      " --out " + shquote(out.path.string()));
    CHECK(r.code == 1);
    CHECK(r.output.find("unknown dataset") != std::string::npos);
  }
  SUBCASE("missing required output location") {
    CmdResult r = run("env -u CMF_OUT_DIR " + bin() + " prepare --dataset movielens --input " +
                      shquote(raw.path.string()));
    CHECK(r.code == 1);
    CHECK(r.output.find("--out required") != std::string::npos);
  }
}

TEST_CASE("cli prepare: out dir comes from flag, then config, then environment") {
  testutil::TempDir raw("cli_raw_env");
  testutil::TempDir cfg_out("cli_out_cfg");
  testutil::TempDir env_out("cli_out_env");
  write_movielens_raw(raw);

  SUBCASE("environment fallback") {
    CmdResult r = run("CMF_OUT_DIR=" + shquote(env_out.path.string()) + " " + bin() +
                      " prepare --dataset movielens --input " + shquote(raw.path.string()));
    REQUIRE(r.code == 0);
    CHECK(r.output.find("out " + env_out.path.string()) != std::string::npos);
    CHECK_NOTHROW(load_ratings_tsv(env_out.file("ratings.tsv")));
  }
  SUBCASE("config file out_dir beats the environment") {
    testutil::TempDir scratch("cli_cfg");
    testutil::write_file(scratch.file("run.cfg"), "out_dir = " + cfg_out.path.string() + "\n");
    CmdResult r = run("CMF_OUT_DIR=" + shquote(env_out.path.string()) + " " + bin() +
                      " prepare --config " + shquote(scratch.file("run.cfg")) +
                      " --dataset movielens --input " + shquote(raw.path.string()));
    REQUIRE(r.code == 0);
    CHECK_NOTHROW(load_ratings_tsv(cfg_out.file("ratings.tsv")));
    CHECK(!std::ifstream(env_out.file("ratings.tsv")).good());
  }
}

namespace {

// Shared prepared directory for the pipeline stages below.
struct Prepared {
  testutil::TempDir raw{"cli_pipe_raw"};
  testutil::TempDir data{"cli_pipe_data"};
  Prepared() {
    write_movielens_raw(raw);
    CmdResult r = run(bin() + " prepare --dataset movielens --input " + shquote(raw.path.string()) +
                      " --out " + shquote(data.path.string()));
    REQUIRE(r.code == 0);
  }
};

}  // namespace

TEST_CASE("cli couple: builds loadable graphs") {
  Prepared p;
  std::string out = p.data.file("items_coupled.tsv");
  std::string cmd = bin() + " couple --data " + shquote(p.data.path.string()) +
                    " --entities items --kind coupled --k 2 --out " + shquote(out);
  CmdResult r = run(cmd);
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("entities items  kind coupled  K 2  normalized 1") != std::string::npos);
  CHECK(r.output.find("neighbors min ") != std::string::npos);

  NeighborGraph g = load_neighbor_graph(out);
  CHECK(g.n_entities == 5);
  CHECK(g.normalized);
  for (std::int32_t i = 0; i < g.n_entities; ++i) {
    CHECK(g.neighbors[i].size() <= 2);
    Real sum = 0;
    for (const auto& nb : g.neighbors[i]) {
      CHECK(nb.index != i);
      CHECK(nb.weight > 0);
      sum += nb.weight;
    }
    if (!g.neighbors[i].empty()) CHECK(sum == doctest::Approx(1.0));
  }

  std::string first = testutil::read_file(out);
  REQUIRE(run(cmd).code == 0);
  CHECK(testutil::read_file(out) == first);

  SUBCASE("raw keeps unnormalized weights") {
    std::string raw_out = p.data.file("users_jaccard_raw.tsv");
    CmdResult rr = run(bin() + " couple --data " + shquote(p.data.path.string()) +
                       " --entities users --kind jaccard --k 3 --raw --out " + shquote(raw_out));
    REQUIRE(rr.code == 0);
    CHECK(rr.output.find("normalized 0") != std::string::npos);
    CHECK_FALSE(load_neighbor_graph(raw_out).normalized);
  }
  SUBCASE("rating pearson graphs come from the ratings file") {
    std::string rp_out = p.data.file("users_rp.tsv");
    CmdResult rr = run(bin() + " couple --data " + shquote(p.data.path.string()) +
                       " --entities users --kind rating_pearson --k 2 --out " + shquote(rp_out));
    REQUIRE(rr.code == 0);
    CHECK(load_neighbor_graph(rp_out).n_entities == 6);
  }
  SUBCASE("bad arguments exit nonzero") {
    CHECK(run(bin() + " couple --data " + shquote(p.data.path.string()) +
              " --entities items --kind sorcery --k 2 --out /tmp/x.tsv")
              .code == 1);
    CHECK(run(bin() + " couple --data " + shquote(p.data.path.string()) +
              " --entities both --kind coupled --k 2 --out /tmp/x.tsv")
              .code == 1);
    CHECK(run(bin() + " couple --data " + shquote(p.data.path.string()) +
              " --entities items --kind coupled --k 0 --out /tmp/x.tsv")
              .code == 1);
  }
}

TEST_CASE("cli train: writes model and trace, reruns reproduce bytes") {
  Prepared p;
  std::string model1 = p.data.file("m1.tsv"), model2 = p.data.file("m2.tsv");
  std::string trace = p.data.file("trace.tsv");
  std::string flags = " --variant PMF --d 2 --lambda 0.05 --eta 0.05 --max-epochs 10"
                      " --tol 1e-9 --seed 3 --trace " + shquote(trace);

  CmdResult r = run(bin() + " train --data " + shquote(p.data.path.string()) + flags + " --out " +
                    shquote(model1));
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("variant PMF") != std::string::npos);
  CHECK(r.output.find("epochs ") != std::string::npos);
  CHECK(r.output.find("objective ") != std::string::npos);

  LoadedModel loaded = load_model(model1);
  CHECK(loaded.variant == Variant::PMF);
  CHECK(loaded.model.user_factors.rows() == 6);
  CHECK(loaded.model.item_factors.rows() == 5);
  CHECK(loaded.config_echo.find("d=2 ") == 0);
  CHECK(testutil::read_file(trace).find("# trace 1\n") == 0);

  REQUIRE(run(bin() + " train --data " + shquote(p.data.path.string()) + flags + " --out " +
              shquote(model2))
              .code == 0);
  CHECK(testutil::read_file(model1) == testutil::read_file(model2));

  SUBCASE("coupled variant consumes graph files") {
    std::string ug = p.data.file("ug.tsv"), ig = p.data.file("ig.tsv");
    REQUIRE(run(bin() + " couple --data " + shquote(p.data.path.string()) +
                " --entities users --kind coupled --k 2 --out " + shquote(ug))
                .code == 0);
    REQUIRE(run(bin() + " couple --data " + shquote(p.data.path.string()) +
                " --entities items --kind coupled --k 2 --out " + shquote(ig))
                .code == 0);
    std::string out = p.data.file("cmf_model.tsv");
    CmdResult rc = run(bin() + " train --data " + shquote(p.data.path.string()) +
                       " --variant CMF --d 2 --alpha 0.3 --beta 0.3 --max-epochs 10" +
                       " --user-graph " + shquote(ug) + " --item-graph " + shquote(ig) +
                       " --out " + shquote(out));
    CAPTURE(rc.output);
    REQUIRE(rc.code == 0);
    CHECK(load_model(out).variant == Variant::CMF);
  }
  SUBCASE("coupling without graphs is an error") {
    CmdResult rc = run(bin() + " train --data " + shquote(p.data.path.string()) +
                       " --variant CMF --alpha 0.3 --max-epochs 5 --out " +
                       shquote(p.data.file("x.tsv")));
    CHECK(rc.code == 1);
    CHECK(rc.output.find("error: ") != std::string::npos);
  }
  SUBCASE("config out_dir names the default model path") {
    testutil::write_file(p.data.file("run.cfg"), "out_dir = " + p.data.path.string() + "\n");
    CmdResult rc = run(bin() + " train --config " + shquote(p.data.file("run.cfg")) +
                       " --data " + shquote(p.data.path.string()) + " --variant RSVD --max-epochs 5");
    REQUIRE(rc.code == 0);
    CHECK(rc.output.find("model " + p.data.path.string()) != std::string::npos);
    CHECK(load_model(p.data.file("RSVD_model.tsv")).variant == Variant::RSVD);
  }
}

TEST_CASE("cli train: divergence exits nonzero and leaves a trace") {
  testutil::TempDir data("cli_diverge");
  RatingDataset ds;
  ds.n_users = 2;
  ds.n_items = 1;
  ds.scale_min = -1e300;
  ds.scale_max = 1e300;
  ds.entries = {{0, 0, 1e160}, {1, 0, -1e160}};
  ds.update_global_mean();
  save_ratings_tsv(ds, data.file("ratings.tsv"));

  std::string model = data.file("model.tsv");
  CmdResult r = run(bin() + " train --data " + shquote(data.path.string()) +
                    " --variant PMF --d 2 --max-epochs 5 --out " + shquote(model));
  CHECK(r.code == 1);
  CHECK(r.output.find("diverged") != std::string::npos);
  CHECK(r.output.find("trace written to") != std::string::npos);
  CHECK(std::ifstream(model + ".trace.tsv").good());
  CHECK_FALSE(std::ifstream(model).good());  // no model on failure
}

TEST_CASE("cli evaluate: study CSV, summary table, config precedence") {
  Prepared p;
  std::string csv_path = p.data.file("report.csv");
  std::string table_path = p.data.file("table.txt");
  std::string cmd = bin() + " evaluate --data " + shquote(p.data.path.string()) +
                    " --methods Constant,PMF,CMF --d 2 --max-epochs 10 --folds 2" +
                    " --fold-seed 7 --dataset-name demo --out " + shquote(csv_path) +
                    " --table " + shquote(table_path);
  CmdResult r = run(cmd);
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("csv " + csv_path) != std::string::npos);
  CHECK(r.output.find("dataset") != std::string::npos);

  std::string csv = testutil::read_file(csv_path);
  auto reports = parse_report_csv(csv);
  REQUIRE(reports.size() == 3);
  for (const auto& rep : reports) {
    CHECK(rep.dataset == "demo");
    CHECK(rep.folds.size() == 2);
  }
  CHECK(reports[0].method == Method::Constant);
  CHECK(reports[2].method == Method::CMF);
  CHECK(testutil::read_file(table_path).find("dataset") != std::string::npos);

  SUBCASE("reruns are byte-identical") {
    std::string first = csv;
    REQUIRE(run(cmd).code == 0);
    CHECK(testutil::read_file(csv_path) == first);
  }
  SUBCASE("config file supplies settings, flags override") {
    testutil::write_file(p.data.file("exp.cfg"),
                         "# experiment defaults\n"
                         "d = 2\n"
                         "max_epochs = 6\n"
                         "methods = Constant,PMF\n"
                         "folds = 2\n"
                         "dataset = cfgname\n");
    std::string out1 = p.data.file("r_cfg.csv");
    CmdResult rc = run(bin() + " evaluate --config " + shquote(p.data.file("exp.cfg")) +
                       " --data " + shquote(p.data.path.string()) + " --out " + shquote(out1));
    REQUIRE(rc.code == 0);
    auto cfg_reports = parse_report_csv(testutil::read_file(out1));
    REQUIRE(cfg_reports.size() == 2);
    CHECK(cfg_reports[0].dataset == "cfgname");
    CHECK(cfg_reports[0].config_echo.find("d=2 ") == 0);
    CHECK(cfg_reports[0].config_echo.find("max_epochs=6") != std::string::npos);

    std::string out2 = p.data.file("r_flags.csv");
    CmdResult rf = run(bin() + " evaluate --config " + shquote(p.data.file("exp.cfg")) +
                       " --data " + shquote(p.data.path.string()) + " --d 3 --methods Constant" +
                       " --dataset-name flagname --out " + shquote(out2));
    REQUIRE(rf.code == 0);
    auto flag_reports = parse_report_csv(testutil::read_file(out2));
    REQUIRE(flag_reports.size() == 1);
    CHECK(flag_reports[0].dataset == "flagname");
    CHECK(flag_reports[0].config_echo.find("d=3 ") == 0);
  }
  SUBCASE("error paths") {
    CHECK(run(bin() + " evaluate --data " + shquote(p.data.path.string()) +
              " --methods Constant --folds 1 --out /tmp/x.csv")
              .code == 1);
    CHECK(run(bin() + " evaluate --data " + shquote(p.data.path.string()) +
              " --methods Oracle --folds 2 --out /tmp/x.csv")
              .code == 1);
    CmdResult re = run("env -u CMF_OUT_DIR " + bin() + " evaluate --data " +
                       shquote(p.data.path.string()) + " --folds 2");
    CHECK(re.code == 1);
    CHECK(re.output.find("--methods required") != std::string::npos);

    testutil::write_file(p.data.file("bad.cfg"), "bogus = 1\n");
    CmdResult rb = run(bin() + " evaluate --config " + shquote(p.data.file("bad.cfg")) +
                       " --data " + shquote(p.data.path.string()) + " --methods Constant --folds 2");
    CHECK(rb.code == 1);
    CHECK(rb.output.find("unknown config key 'bogus'") != std::string::npos);
  }
}

TEST_CASE("cli compare: renders tables from report CSVs") {
  Prepared p;
  std::string csv_path = p.data.file("report.csv");
  REQUIRE(run(bin() + " evaluate --data " + shquote(p.data.path.string()) +
              " --methods Constant,PMF,CMF --d 2 --max-epochs 10 --folds 2 --fold-seed 7" +
              " --dataset-name demo --out " + shquote(csv_path))
              .code == 0);

  std::string table_path = p.data.file("cmp.txt"), cmp_csv = p.data.file("cmp.csv");
  CmdResult r = run(bin() + " compare --reports " + shquote(csv_path) +
                    " --target CMF --baselines Constant,PMF --out " + shquote(table_path) +
                    " --csv " + shquote(cmp_csv));
  CAPTURE(r.output);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("target CMF") != std::string::npos);
  CHECK(r.output.find("* CMF") != std::string::npos);
  CHECK(r.output.find("Constant") != std::string::npos);
  CHECK(r.output.find("PMF") != std::string::npos);
  CHECK(testutil::read_file(table_path) == r.output);
  CHECK(testutil::read_file(cmp_csv).find("d,metric,method,value,improve_pct\n") == 0);

  SUBCASE("reports with different fold assignments cannot be compared") {
    std::string other = p.data.file("report_seed8.csv");
    REQUIRE(run(bin() + " evaluate --data " + shquote(p.data.path.string()) +
                " --methods PMF --d 2 --max-epochs 10 --folds 2 --fold-seed 8" +
                " --dataset-name demo --out " + shquote(other))
                .code == 0);
    CmdResult rm = run(bin() + " compare --reports " + shquote(csv_path) + " " +
                       shquote(other) + " --target CMF");
    CHECK(rm.code == 1);
    CHECK(rm.output.find("different fold assignments") != std::string::npos);
  }
  SUBCASE("missing report file") {
    CHECK(run(bin() + " compare --reports /nonexistent/r.csv --target CMF").code == 1);
  }
}
