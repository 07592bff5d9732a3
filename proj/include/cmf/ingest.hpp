#pragma once

#include "cmf/types.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace cmf {

struct MovielensData {
  RatingDataset ratings;
  AttributeTable users;  // gender, age, occupation, zipcode
  AttributeTable items;  // genre (composite multi-genre string)
};

struct BookcrossingStats {
  std::size_t raw_ratings = 0;  // rating rows before any filtering
  std::size_t implicit_dropped = 0;
  std::size_t unknown_isbn_dropped = 0;
  std::size_t unknown_user_dropped = 0;
  std::size_t duplicate_overwrites = 0;
  std::size_t retained = 0;
};

struct BookcrossingData {
  RatingDataset ratings;
  AttributeTable users;  // age (decade bins), location_country
  AttributeTable items;  // book_author, year_of_publication (decade bins), publisher
  BookcrossingStats stats;
};

/// Parses a MovieLens-1M style directory (ratings.dat, users.dat,
/// movies.dat, "::"-delimited). Entity indices follow file order of the
/// attribute files; ratings referencing unknown ids raise ParseError.
/// Duplicate (user, item) ratings keep the last occurrence in file order.
/// If max_ratings > 0 only the first max_ratings entries (file order, after
/// dedup) are kept.
MovielensData parse_movielens(const std::string& directory, std::size_t max_ratings = 0);

/// Parses a BookCrossing directory (BX-Users.csv, BX-Books.csv,
/// BX-Book-Ratings.csv; ';'-delimited, double-quoted, ISO-8859-1).
/// Implicit ratings (value 0) and rows with ISBNs or user ids absent from
/// the attribute files are dropped; counts are reported in stats.
BookcrossingData parse_bookcrossing(const std::string& directory, std::size_t max_ratings = 0);

/// Bin id for values missing or outside every bin.
inline constexpr std::int32_t kNoBin = -1;

/// Maps each value to the half-open bin [edges[i], edges[i+1]) containing
/// it; absent or out-of-range values map to kNoBin. Edges must be strictly
/// increasing (ConfigError otherwise).
std::vector<std::int32_t> discretize_numeric(const std::vector<std::optional<Real>>& column,
                                             const std::vector<Real>& edges);

/// Seeded uniform partition of the rating entries into k folds whose sizes
/// differ by at most one. Identical (dataset, k, seed) inputs reproduce the
/// identical assignment.
FoldAssignment kfold_split(const RatingDataset& ds, std::int32_t k, std::uint64_t seed);

}  // namespace cmf
