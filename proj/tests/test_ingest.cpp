#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cmf/errors.hpp"
#include "cmf/ingest.hpp"

#include "util.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

using namespace cmf;
using testutil::TempDir;
using testutil::write_file;

namespace {

// Three users, three movies, four distinct (user, movie) pairs; the last
// ratings row repeats (1, 2) so dedup behaviour is observable.
void write_movielens_fixture(const TempDir& dir) {
  write_file(dir.file("users.dat"),
             "1::F::1::10::48067\n"
             "2::M::56::16::70072\n"
             "3::M::25::15::55117\n");
  write_file(dir.file("movies.dat"),
             "1::Toy Story (1995)::Animation|Children's|Comedy\n"
             "2::Jumanji (1995)::Adventure|Children's|Fantasy\n"
             "3::Grumpier Old Men (1995)::Comedy|Romance\n");
  write_file(dir.file("ratings.dat"),
             "1::1::5::978300760\n"
             "1::2::3::978302109\n"
             "2::1::4::978301968\n"
             "3::3::1::978300275\n"
             "1::2::4::978824291\n");
}

}  // namespace

TEST_CASE("movielens: counts, attributes, vocab ids") {
  TempDir dir("ml_basic");
  write_movielens_fixture(dir);
  MovielensData data = parse_movielens(dir.path.string());

  CHECK(data.ratings.n_users == 3);
  CHECK(data.ratings.n_items == 3);
  CHECK(data.ratings.scale_min == 1.0);
  CHECK(data.ratings.scale_max == 5.0);

  REQUIRE(data.users.attribute_names ==
          std::vector<std::string>{"gender", "age", "occupation", "zipcode"});
  // id 0 is reserved for the missing sentinel; real values start at 1 in
  // first-appearance order.
  CHECK(data.users.vocab[0] == std::vector<std::string>{"", "F", "M"});
  CHECK(data.users.cells(0, 0) == 1);
  CHECK(data.users.cells(1, 0) == 2);
  CHECK(data.users.cells(2, 0) == 2);
  CHECK(data.users.vocab[1] == std::vector<std::string>{"", "1", "56", "25"});

  REQUIRE(data.items.attribute_names == std::vector<std::string>{"genre"});
  CHECK(data.items.vocab[0] ==
        std::vector<std::string>{"", "Animation|Children's|Comedy",
                                 "Adventure|Children's|Fantasy", "Comedy|Romance"});
  CHECK(data.items.cells(0, 0) == 1);
  CHECK(data.items.cells(2, 0) == 3);
}

TEST_CASE("movielens: duplicate rating keeps last value at first position") {
  TempDir dir("ml_dup");
  write_movielens_fixture(dir);
  MovielensData data = parse_movielens(dir.path.string());

  REQUIRE(data.ratings.entries.size() == 4);
  // (user 1, movie 2) appeared twice: value from the second row, slot from
  // the first.
  CHECK(data.ratings.entries[1].user == 0);
  CHECK(data.ratings.entries[1].item == 1);
  CHECK(data.ratings.entries[1].value == 4.0);
  CHECK(data.ratings.global_mean == doctest::Approx((5 + 4 + 4 + 1) / 4.0));
}

TEST_CASE("movielens: max_ratings truncates after dedup, in file order") {
  TempDir dir("ml_trunc");
  write_movielens_fixture(dir);
  MovielensData data = parse_movielens(dir.path.string(), 2);

  REQUIRE(data.ratings.entries.size() == 2);
  CHECK(data.ratings.entries[0].value == 5.0);
  CHECK(data.ratings.entries[1].value == 4.0);  // deduped value survives truncation
}

TEST_CASE("movielens: referential and format errors carry file and line") {
  TempDir dir("ml_err");
  write_movielens_fixture(dir);

  SUBCASE("unknown movie id") {
    write_file(dir.file("ratings.dat"), "1::1::5::0\n1::9::5::0\n");
    try {
      parse_movielens(dir.path.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("unknown movie") != std::string::npos);
    }
  }
  SUBCASE("unknown user id") {
    write_file(dir.file("ratings.dat"), "7::1::5::0\n");
    CHECK_THROWS_AS(parse_movielens(dir.path.string()), ParseError);
  }
  SUBCASE("rating out of range") {
    write_file(dir.file("ratings.dat"), "1::1::6::0\n");
    try {
      parse_movielens(dir.path.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("outside [1,5]") != std::string::npos);
    }
  }
  SUBCASE("wrong field count in users.dat") {
    write_file(dir.file("users.dat"), "1::F::1::10\n");
    try {
      parse_movielens(dir.path.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
      CHECK(std::string(e.what()).find("expected 5 fields") != std::string::npos);
    }
  }
  SUBCASE("duplicate user id") {
    write_file(dir.file("users.dat"), "1::F::1::10::48067\n1::M::25::0::12345\n");
    CHECK_THROWS_AS(parse_movielens(dir.path.string()), ParseError);
  }
  SUBCASE("non-numeric id") {
    write_file(dir.file("ratings.dat"), "x1::1::5::0\n");
    CHECK_THROWS_AS(parse_movielens(dir.path.string()), ParseError);
  }
  SUBCASE("missing file") {
    TempDir empty("ml_missing");
    CHECK_THROWS_AS(parse_movielens(empty.path.string()), ParseError);
  }
}

TEST_CASE("movielens: empty ratings file is fine at the library level") {
  TempDir dir("ml_empty");
  write_movielens_fixture(dir);
  write_file(dir.file("ratings.dat"), "");
  MovielensData data = parse_movielens(dir.path.string());
  CHECK(data.ratings.entries.empty());
  CHECK(data.ratings.global_mean == 0.0);
  CHECK(data.ratings.n_users == 3);  // attribute-only entities still count
}

namespace {

void write_bx_fixture(const TempDir& dir) {
  write_file(dir.file("BX-Users.csv"),
             "\"User-ID\";\"Location\";\"Age\"\n"
             "\"1\";\"nyc, new york, usa\";\"35\"\n"
             "\"2\";\"melbourne, victoria, australia\";NULL\n"
             "\"3\";\"k\xF6ln, nrw, germany\";\"25\"\n");
  write_file(dir.file("BX-Books.csv"),
             "\"ISBN\";\"Book-Title\";\"Book-Author\";\"Year-Of-Publication\";\"Publisher\";"
             "\"Image-URL-S\";\"Image-URL-M\";\"Image-URL-L\"\n"
             "\"034545104X\";\"Flesh Tones\";\"Am\xE9lie Nothomb\";\"2002\";\"Ballantine\";"
             "\"u\";\"u\";\"u\"\n"
             "\"0002005018\";\"The \"\"Best\"\" Book\";\"Richard Wright\";\"2001\";"
             "\"HarperFlamingo\";\"u\";\"u\";\"u\"\n"
             "\"0002005018\";\"dup isbn row\";\"Other Author\";\"1999\";\"Other\";"
             "\"u\";\"u\";\"u\"\n"
             "\"0771074670\";\"Too New\";\"Jane Doe\";\"2010\";\"Pub\";\"u\";\"u\";\"u\"\n");
  write_file(dir.file("BX-Book-Ratings.csv"),
             "\"User-ID\";\"ISBN\";\"Book-Rating\"\n"
             "\"1\";\"034545104X\";\"8\"\n"
             "\"2\";\"0002005018\";\"0\"\n"
             "\"1\";\"9999999999\";\"0\"\n"
             "\"1\";\"9999999999\";\"5\"\n"
             "\"99\";\"9999999999\";\"5\"\n"
             "\"99\";\"034545104X\";\"5\"\n"
             "\"3\";\"0002005018\";\"7\"\n"
             "\"1\";\"034545104X\";\"9\"\n");
}

}  // namespace

TEST_CASE("bookcrossing: attributes, binning, latin-1 transcoding") {
  TempDir dir("bx_basic");
  write_bx_fixture(dir);
  BookcrossingData data = parse_bookcrossing(dir.path.string());

  REQUIRE(data.users.attribute_names ==
          std::vector<std::string>{"age", "location_country"});
  CHECK(data.users.vocab[0] == std::vector<std::string>{"", "[30,40)", "[20,30)"});
  CHECK(data.users.cells(0, 0) == 1);  // 35 -> [30,40)
  CHECK(data.users.cells(1, 0) == 0);  // NULL age -> sentinel
  CHECK(data.users.vocab[1] == std::vector<std::string>{"", "usa", "australia", "germany"});

  REQUIRE(data.items.attribute_names ==
          std::vector<std::string>{"book_author", "year_of_publication", "publisher"});
  CHECK(data.items.n_entities == 3);  // duplicate ISBN row dropped, first kept
  // 0xE9 in the source is ISO-8859-1 e-acute; stored as two-byte UTF-8.
  CHECK(data.items.vocab[0][1] == "Am\xC3\xA9lie Nothomb");
  CHECK(data.items.vocab[0][2] == "Richard Wright");  // from the first ISBN row
  CHECK(data.items.vocab[1][1] == "[2000,2010)");
  CHECK(data.items.cells(2, 1) == 0);  // year 2010 falls outside every bin
}

TEST_CASE("bookcrossing: rating filters apply in order and count correctly") {
  TempDir dir("bx_stats");
  write_bx_fixture(dir);
  BookcrossingData data = parse_bookcrossing(dir.path.string());

  const BookcrossingStats& s = data.stats;
  CHECK(s.raw_ratings == 8);
  // value 0 wins over unknown ISBN, unknown ISBN wins over unknown user.
  CHECK(s.implicit_dropped == 2);
  CHECK(s.unknown_isbn_dropped == 2);
  CHECK(s.unknown_user_dropped == 1);
  CHECK(s.duplicate_overwrites == 1);
  CHECK(s.retained == 2);

  REQUIRE(data.ratings.entries.size() == 2);
  CHECK(data.ratings.scale_max == 10.0);
  CHECK(data.ratings.entries[0].value == 9.0);  // overwritten by the last row
  CHECK(data.ratings.entries[1].value == 7.0);
}

TEST_CASE("bookcrossing: quoting errors and control bytes") {
  TempDir dir("bx_err");
  write_bx_fixture(dir);

  SUBCASE("control byte reports its absolute offset") {
    std::string text =
        "\"User-ID\";\"Location\";\"Age\"\n"
        "\"1\";\"ab\x10"
        "cd\";\"35\"\n";
    write_file(dir.file("BX-Users.csv"), text);
    try {
      parse_bookcrossing(dir.path.string());
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(e.byte_offset() == text.find('\x10'));
      CHECK(std::string(e.what()).find("control byte") != std::string::npos);
    }
  }
  SUBCASE("unterminated quoted field") {
    write_file(dir.file("BX-Users.csv"),
               "\"User-ID\";\"Location\";\"Age\"\n\"1\";\"somewhere\n");
    try {
      parse_bookcrossing(dir.path.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("unterminated") != std::string::npos);
    }
  }
  SUBCASE("garbage after closing quote") {
    write_file(dir.file("BX-Users.csv"),
               "\"User-ID\";\"Location\";\"Age\"\n\"1\"x;\"somewhere\";\"35\"\n");
    try {
      parse_bookcrossing(dir.path.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("garbage after closing quote") != std::string::npos);
    }
  }
  SUBCASE("wrong field count") {
    write_file(dir.file("BX-Users.csv"),
               "\"User-ID\";\"Location\";\"Age\"\n\"1\";\"somewhere\"\n");
    CHECK_THROWS_AS(parse_bookcrossing(dir.path.string()), ParseError);
  }
  SUBCASE("rating out of range") {
    write_file(dir.file("BX-Book-Ratings.csv"),
               "\"User-ID\";\"ISBN\";\"Book-Rating\"\n\"1\";\"034545104X\";\"11\"\n");
    CHECK_THROWS_AS(parse_bookcrossing(dir.path.string()), ParseError);
  }
}

TEST_CASE("bookcrossing: bare (unquoted) fields parse too") {
  TempDir dir("bx_bare");
  write_bx_fixture(dir);
  write_file(dir.file("BX-Book-Ratings.csv"),
             "User-ID;ISBN;Book-Rating\n"
             "1;034545104X;8\n");
  BookcrossingData data = parse_bookcrossing(dir.path.string());
  REQUIRE(data.ratings.entries.size() == 1);
  CHECK(data.ratings.entries[0].value == 8.0);
}

TEST_CASE("discretize_numeric: half-open bins, range edges, missing values") {
  std::vector<std::optional<Real>> col = {0.0, 9.99, 10.0, 19.99, 20.0,
                                          -1.0, std::nullopt};
  auto bins = discretize_numeric(col, {0, 10, 20});
  CHECK(bins == std::vector<std::int32_t>{0, 0, 1, 1, kNoBin, kNoBin, kNoBin});

  SUBCASE("fewer than two edges maps everything to kNoBin") {
    auto all_missing = discretize_numeric(col, {5});
    CHECK(std::all_of(all_missing.begin(), all_missing.end(),
                      [](std::int32_t b) { return b == kNoBin; }));
  }
  SUBCASE("non-increasing edges rejected") {
    CHECK_THROWS_AS(discretize_numeric(col, {1, 1}), ConfigError);
    CHECK_THROWS_AS(discretize_numeric(col, {2, 1}), ConfigError);
  }
}

namespace {

RatingDataset synthetic_ratings(std::int32_t n_entries) {
  RatingDataset ds;
  ds.n_users = n_entries;
  ds.n_items = 1;
  for (std::int32_t i = 0; i < n_entries; ++i) ds.entries.push_back({i, 0, 3.0});
  ds.update_global_mean();
  return ds;
}

}  // namespace

TEST_CASE("kfold_split: coverage, balance, determinism") {
  RatingDataset ds = synthetic_ratings(23);
  FoldAssignment folds = kfold_split(ds, 5, 42);

  REQUIRE(folds.fold_of.size() == 23);
  CHECK(folds.n_folds == 5);
  std::map<std::int32_t, std::int32_t> sizes;
  for (std::int32_t f : folds.fold_of) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++sizes[f];
  }
  REQUIRE(sizes.size() == 5);
  std::int32_t lo = 23, hi = 0;
  for (auto& [fold, n] : sizes) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  CHECK(hi - lo <= 1);

  FoldAssignment again = kfold_split(ds, 5, 42);
  CHECK(again.fold_of == folds.fold_of);

  FoldAssignment other = kfold_split(ds, 5, 43);
  CHECK(other.fold_of != folds.fold_of);
}

TEST_CASE("kfold_split: argument validation") {
  RatingDataset ds = synthetic_ratings(4);
  CHECK_THROWS_AS(kfold_split(ds, 1, 42), ConfigError);
  CHECK_THROWS_AS(kfold_split(ds, 5, 42), ConfigError);  // more folds than entries
  RatingDataset empty;
  CHECK_THROWS_AS(kfold_split(empty, 2, 42), ConfigError);
}
