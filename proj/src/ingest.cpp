#include "cmf/ingest.hpp"

#include "cmf/errors.hpp"
#include "cmf/random.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <utility>

namespace cmf {

namespace {

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

// Splits on an exact multi-character delimiter, keeping empty fields.
std::vector<std::string> split_on(const std::string& line, const std::string& delim) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
  return fields;
}

std::int64_t parse_id(const std::string& field, const std::string& file, std::size_t line) {
  if (field.empty()) throw ParseError(file, line, "empty id field");
  std::int64_t value = 0;
  for (char c : field) {
    if (c < '0' || c > '9') throw ParseError(file, line, "non-numeric id '" + field + "'");
    value = value * 10 + (c - '0');
    if (value > (std::int64_t(1) << 40)) throw ParseError(file, line, "id out of range");
  }
  return value;
}

Real parse_rating_value(const std::string& field, const std::string& file, std::size_t line) {
  try {
    std::size_t used = 0;
    Real v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(file, line, "bad rating value '" + field + "'");
  }
}

// Mutable counterpart of attribute_table_from_rows for streaming parsers.
class TableBuilder {
 public:
  explicit TableBuilder(std::vector<std::string> names)
      : names_(std::move(names)),
        vocab_(names_.size(), {""}),
        lookup_(names_.size()) {}

  void add_row(const std::vector<std::string>& values) {
    for (std::size_t j = 0; j < names_.size(); ++j) {
      const std::string& value = values[j];
      if (value.empty()) {
        ids_.push_back(0);
        continue;
      }
      auto [it, inserted] =
          lookup_[j].try_emplace(value, static_cast<std::int32_t>(vocab_[j].size()));
      if (inserted) vocab_[j].push_back(value);
      ids_.push_back(it->second);
    }
    ++rows_;
  }

  AttributeTable build() {
    AttributeTable table;
    table.n_entities = rows_;
    table.attribute_names = names_;
    table.vocab = std::move(vocab_);
    table.missing_id.assign(names_.size(), 0);
    table.cells.resize(rows_, static_cast<std::int32_t>(names_.size()));
    std::size_t k = 0;
    for (std::int32_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < names_.size(); ++j) table.cells(i, j) = ids_[k++];
    return table;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> vocab_;
  std::vector<std::unordered_map<std::string, std::int32_t>> lookup_;
  std::vector<std::int32_t> ids_;
  std::int32_t rows_ = 0;
};

std::string bin_label(const std::vector<Real>& edges, std::int32_t bin) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "[%g,%g)", edges[bin], edges[bin + 1]);
  return buf;
}

// Applies dedup-keep-last in place: a later duplicate overwrites the value
// at the first occurrence's position, preserving file order.
class EntryCollector {
 public:
  void add(std::int32_t user, std::int32_t item, Real value) {
    auto key = (static_cast<std::int64_t>(user) << 32) | static_cast<std::uint32_t>(item);
    auto [it, inserted] = position_.try_emplace(key, entries_.size());
    if (inserted) {
      entries_.push_back({user, item, value});
    } else {
      entries_[it->second].value = value;
      ++overwrites_;
    }
  }

  std::vector<RatingEntry> take() { return std::move(entries_); }
  std::size_t overwrites() const { return overwrites_; }

 private:
  std::unordered_map<std::int64_t, std::size_t> position_;
  std::vector<RatingEntry> entries_;
  std::size_t overwrites_ = 0;
};

}  // namespace

MovielensData parse_movielens(const std::string& directory, std::size_t max_ratings) {
  const std::string users_path = directory + "/users.dat";
  const std::string movies_path = directory + "/movies.dat";
  const std::string ratings_path = directory + "/ratings.dat";

  std::unordered_map<std::int64_t, std::int32_t> user_index;
  std::unordered_map<std::int64_t, std::int32_t> item_index;

  // users.dat: UserID::Gender::Age::Occupation::Zip-code
  TableBuilder users({"gender", "age", "occupation", "zipcode"});
  {
    std::ifstream in(users_path);
    if (!in) throw ParseError(users_path, 0, "cannot open");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = strip_cr(line);
      if (line.empty()) continue;
      auto fields = split_on(line, "::");
      if (fields.size() != 5)
        throw ParseError(users_path, line_no,
                         "expected 5 fields, got " + std::to_string(fields.size()));
      std::int64_t raw_id = parse_id(fields[0], users_path, line_no);
      auto [it, inserted] =
          user_index.try_emplace(raw_id, static_cast<std::int32_t>(user_index.size()));
      if (!inserted) throw ParseError(users_path, line_no, "duplicate user id " + fields[0]);
      users.add_row({fields[1], fields[2], fields[3], fields[4]});
    }
  }

  // movies.dat: MovieID::Title::Genres; only the genre attribute is kept,
  // with the full pipe-separated string as one categorical value.
  TableBuilder items({"genre"});
  {
    std::ifstream in(movies_path);
    if (!in) throw ParseError(movies_path, 0, "cannot open");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = strip_cr(line);
      if (line.empty()) continue;
      auto fields = split_on(line, "::");
      if (fields.size() != 3)
        throw ParseError(movies_path, line_no,
                         "expected 3 fields, got " + std::to_string(fields.size()));
      std::int64_t raw_id = parse_id(fields[0], movies_path, line_no);
      auto [it, inserted] =
          item_index.try_emplace(raw_id, static_cast<std::int32_t>(item_index.size()));
      if (!inserted) throw ParseError(movies_path, line_no, "duplicate movie id " + fields[0]);
      items.add_row({fields[2]});
    }
  }

  // ratings.dat: UserID::MovieID::Rating::Timestamp
  EntryCollector collector;
  {
    std::ifstream in(ratings_path);
    if (!in) throw ParseError(ratings_path, 0, "cannot open");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line = strip_cr(line);
      if (line.empty()) continue;
      auto fields = split_on(line, "::");
      if (fields.size() != 4)
        throw ParseError(ratings_path, line_no,
                         "expected 4 fields, got " + std::to_string(fields.size()));
      std::int64_t raw_user = parse_id(fields[0], ratings_path, line_no);
      std::int64_t raw_item = parse_id(fields[1], ratings_path, line_no);
      auto u = user_index.find(raw_user);
      if (u == user_index.end())
        throw ParseError(ratings_path, line_no, "rating references unknown user " + fields[0]);
      auto i = item_index.find(raw_item);
      if (i == item_index.end())
        throw ParseError(ratings_path, line_no, "rating references unknown movie " + fields[1]);
      Real value = parse_rating_value(fields[2], ratings_path, line_no);
      if (value < 1.0 || value > 5.0)
        throw ParseError(ratings_path, line_no, "rating outside [1,5]: " + fields[2]);
      collector.add(u->second, i->second, value);
    }
  }

  MovielensData data;
  data.users = users.build();
  data.items = items.build();
  data.ratings.n_users = data.users.n_entities;
  data.ratings.n_items = data.items.n_entities;
  data.ratings.scale_min = 1.0;
  data.ratings.scale_max = 5.0;
  data.ratings.entries = collector.take();
  if (max_ratings > 0 && data.ratings.entries.size() > max_ratings)
    data.ratings.entries.resize(max_ratings);
  data.ratings.update_global_mean();
  return data;
}

namespace {

// BX csv records: ';'-delimited fields, usually double-quoted with embedded
// quotes doubled. Bytes below 0x20 inside a record are rejected (they would
// also corrupt the tab-separated interchange); bytes >= 0x80 are ISO-8859-1
// and get transcoded to UTF-8.
std::string latin1_to_utf8(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (unsigned char c : raw) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::vector<std::string> parse_bx_record(const std::string& line, const std::string& file,
                                         std::size_t line_no, std::size_t line_offset) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(line[i]);
    if (c < 0x20)
      throw DecodeError(file, line_offset + i,
                        "control byte 0x" + std::to_string(c) + " inside record");
  }

  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    std::string field;
    if (pos < line.size() && line[pos] == '"') {
      ++pos;
      bool closed = false;
      while (pos < line.size()) {
        if (line[pos] == '"') {
          if (pos + 1 < line.size() && line[pos + 1] == '"') {
            field.push_back('"');
            pos += 2;
          } else {
            ++pos;
            closed = true;
            break;
          }
        } else {
          field.push_back(line[pos++]);
        }
      }
      if (!closed) throw ParseError(file, line_no, "unterminated quoted field");
      if (pos < line.size() && line[pos] != ';')
        throw ParseError(file, line_no, "garbage after closing quote");
    } else {
      std::size_t next = line.find(';', pos);
      field = line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
      pos = next == std::string::npos ? line.size() : next;
    }
    fields.push_back(latin1_to_utf8(field));
    if (pos >= line.size()) break;
    ++pos;  // skip ';'
  }
  return fields;
}

// Calls fn(fields, line_no) for every data record; the first line is the
// header and is skipped.
template <class Fn>
void for_each_bx_record(const std::string& path, std::size_t expected_fields, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::size_t line_start = 0;
  std::size_t line_no = 0;
  while (line_start <= text.size()) {
    if (line_start == text.size()) break;
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    std::string line = text.substr(line_start, line_end - line_start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line_no > 1) {
      auto fields = parse_bx_record(line, path, line_no, line_start);
      if (fields.size() != expected_fields)
        throw ParseError(path, line_no,
                         "expected " + std::to_string(expected_fields) + " fields, got " +
                             std::to_string(fields.size()));
      fn(fields, line_no);
    }
    line_start = line_end + 1;
  }
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<Real> parse_optional_number(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty() || t == "NULL") return std::nullopt;
  try {
    std::size_t used = 0;
    Real v = std::stod(t, &used);
    if (used != t.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

BookcrossingData parse_bookcrossing(const std::string& directory, std::size_t max_ratings) {
  const std::string users_path = directory + "/BX-Users.csv";
  const std::string books_path = directory + "/BX-Books.csv";
  const std::string ratings_path = directory + "/BX-Book-Ratings.csv";

  const std::vector<Real> age_edges = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  const std::vector<Real> year_edges = {1900, 1910, 1920, 1930, 1940, 1950,
                                        1960, 1970, 1980, 1990, 2000, 2010};

  // BX-Users.csv: "User-ID";"Location";"Age"
  std::unordered_map<std::string, std::int32_t> user_index;
  std::vector<std::optional<Real>> raw_ages;
  std::vector<std::string> countries;
  for_each_bx_record(users_path, 3, [&](const std::vector<std::string>& f, std::size_t line_no) {
    auto [it, inserted] =
        user_index.try_emplace(f[0], static_cast<std::int32_t>(user_index.size()));
    if (!inserted) throw ParseError(users_path, line_no, "duplicate user id " + f[0]);
    raw_ages.push_back(parse_optional_number(f[2]));
    std::size_t comma = f[1].find_last_of(',');
    countries.push_back(trim(comma == std::string::npos ? f[1] : f[1].substr(comma + 1)));
  });

  TableBuilder users({"age", "location_country"});
  {
    auto age_bins = discretize_numeric(raw_ages, age_edges);
    for (std::size_t i = 0; i < raw_ages.size(); ++i) {
      std::string age = age_bins[i] == kNoBin ? "" : bin_label(age_edges, age_bins[i]);
      users.add_row({age, countries[i]});
    }
  }

  // BX-Books.csv: ISBN;Title;Author;Year;Publisher;3 image urls
  std::unordered_map<std::string, std::int32_t> item_index;
  TableBuilder items({"book_author", "year_of_publication", "publisher"});
  for_each_bx_record(books_path, 8, [&](const std::vector<std::string>& f, std::size_t) {
    auto [it, inserted] =
        item_index.try_emplace(f[0], static_cast<std::int32_t>(item_index.size()));
    if (!inserted) return;  // duplicate ISBN rows: keep the first
    std::string year;
    std::vector<std::optional<Real>> one = {parse_optional_number(f[3])};
    auto bins = discretize_numeric(one, year_edges);
    if (bins[0] != kNoBin) year = bin_label(year_edges, bins[0]);
    items.add_row({trim(f[2]), year, trim(f[4])});
  });

  // BX-Book-Ratings.csv: "User-ID";"ISBN";"Book-Rating", 0 = implicit
  BookcrossingStats stats;
  EntryCollector collector;
  for_each_bx_record(ratings_path, 3,
                     [&](const std::vector<std::string>& f, std::size_t line_no) {
                       ++stats.raw_ratings;
                       Real value = parse_rating_value(f[2], ratings_path, line_no);
                       if (value == 0.0) {
                         ++stats.implicit_dropped;
                         return;
                       }
                       if (value < 1.0 || value > 10.0)
                         throw ParseError(ratings_path, line_no, "rating outside [0,10]: " + f[2]);
                       auto item = item_index.find(f[1]);
                       if (item == item_index.end()) {
                         ++stats.unknown_isbn_dropped;
                         return;
                       }
                       auto user = user_index.find(f[0]);
                       if (user == user_index.end()) {
                         ++stats.unknown_user_dropped;
                         return;
                       }
                       collector.add(user->second, item->second, value);
                     });
  stats.duplicate_overwrites = collector.overwrites();

  BookcrossingData data;
  data.users = users.build();
  data.items = items.build();
  data.ratings.n_users = data.users.n_entities;
  data.ratings.n_items = data.items.n_entities;
  data.ratings.scale_min = 1.0;
  data.ratings.scale_max = 10.0;
  data.ratings.entries = collector.take();
  if (max_ratings > 0 && data.ratings.entries.size() > max_ratings)
    data.ratings.entries.resize(max_ratings);
  data.ratings.update_global_mean();
  stats.retained = data.ratings.entries.size();
  data.stats = stats;
  return data;
}

std::vector<std::int32_t> discretize_numeric(const std::vector<std::optional<Real>>& column,
                                             const std::vector<Real>& edges) {
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i - 1] < edges[i]))
      throw ConfigError("bin edges must be strictly increasing");

  std::vector<std::int32_t> out(column.size(), kNoBin);
  if (edges.size() < 2) return out;
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (!column[i]) continue;
    Real v = *column[i];
    if (v < edges.front() || v >= edges.back()) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    out[i] = static_cast<std::int32_t>(it - edges.begin()) - 1;
  }
  return out;
}

FoldAssignment kfold_split(const RatingDataset& ds, std::int32_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold split requires k >= 2");
  if (ds.entries.empty()) throw ConfigError("cannot split an empty dataset");
  if (static_cast<std::size_t>(k) > ds.entries.size())
    throw ConfigError("more folds than rating entries");

  std::vector<std::int32_t> order(ds.entries.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  FoldAssignment folds;
  folds.n_folds = k;
  folds.seed = seed;
  folds.fold_of.resize(ds.entries.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    folds.fold_of[order[pos]] = static_cast<std::int32_t>(pos % k);
  return folds;
}

}  // namespace cmf
