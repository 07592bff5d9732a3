#include "cmf/io.hpp"

#include "cmf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace cmf {

std::string format_real(Real value, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", significant_digits, value);
  return buf;
}

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void check_field_text(const std::string& text, const char* what) {
  if (text.find('\t') != std::string::npos || text.find('\n') != std::string::npos ||
      text.find('\r') != std::string::npos)
    throw ConfigError(std::string(what) + " contains a tab or newline");
}

std::int64_t to_int(const std::string& field, const std::string& path, std::size_t line) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path, line, "bad integer '" + field + "'");
  }
}

Real to_real(const std::string& field, const std::string& path, std::size_t line) {
  try {
    std::size_t used = 0;
    Real v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path, line, "bad number '" + field + "'");
  }
}

struct ParsedFile {
  std::string path;
  std::vector<std::string> lines;
  std::map<std::string, std::string> meta;
  std::size_t first_data = 0;  // index into lines (0-based) of the first data line

  std::size_t line_no(std::size_t index) const { return index + 1; }

  const std::string& require(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError(path, 1, "missing metadata key '" + key + "'");
    return it->second;
  }
};

ParsedFile parse_interchange(const std::string& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open");
  ParsedFile file;
  file.path = path;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    file.lines.push_back(line);
  }

  std::size_t i = 0;
  for (; i < file.lines.size(); ++i) {
    const std::string& l = file.lines[i];
    if (l.empty() || l[0] != '#') break;
    std::string rest = l.size() >= 2 && l[1] == ' ' ? l.substr(2) : l.substr(1);
    std::size_t space = rest.find(' ');
    std::string key = rest.substr(0, space);
    std::string value = space == std::string::npos ? "" : rest.substr(space + 1);
    if (!key.empty()) file.meta.emplace(key, value);
  }
  file.first_data = i;

  auto it = file.meta.find(kind);
  if (it == file.meta.end() || it->second != "1")
    throw ParseError(path, 1, "not a " + kind + " interchange file");
  return file;
}

}  // namespace

void save_ratings_tsv(const RatingDataset& ds, const std::string& path) {
  std::string out;
  out += "# ratings 1\n";
  out += "# n_users " + std::to_string(ds.n_users) + "\n";
  out += "# n_items " + std::to_string(ds.n_items) + "\n";
  out += "# scale_min " + format_real(ds.scale_min, 17) + "\n";
  out += "# scale_max " + format_real(ds.scale_max, 17) + "\n";
  out += "user\titem\tvalue\n";
  for (const auto& e : ds.entries) {
    out += std::to_string(e.user);
    out += '\t';
    out += std::to_string(e.item);
    out += '\t';
    out += format_real(e.value, 17);
    out += '\n';
  }
  write_file(path, out);
}

RatingDataset load_ratings_tsv(const std::string& path) {
  ParsedFile file = parse_interchange(path, "ratings");
  RatingDataset ds;
  ds.n_users = static_cast<std::int32_t>(to_int(file.require("n_users"), path, 1));
  ds.n_items = static_cast<std::int32_t>(to_int(file.require("n_items"), path, 1));
  ds.scale_min = to_real(file.require("scale_min"), path, 1);
  ds.scale_max = to_real(file.require("scale_max"), path, 1);
  if (ds.n_users < 0 || ds.n_items < 0) throw ParseError(path, 1, "negative entity count");
  if (!(ds.scale_min <= ds.scale_max)) throw ParseError(path, 1, "scale_min > scale_max");

  std::size_t i = file.first_data;
  if (i >= file.lines.size() || file.lines[i] != "user\titem\tvalue")
    throw ParseError(path, file.line_no(i), "expected header 'user\\titem\\tvalue'");
  for (++i; i < file.lines.size(); ++i) {
    if (file.lines[i].empty()) continue;
    auto fields = split_tabs(file.lines[i]);
    if (fields.size() != 3)
      throw ParseError(path, file.line_no(i), "expected 3 fields");
    RatingEntry e;
    e.user = static_cast<std::int32_t>(to_int(fields[0], path, file.line_no(i)));
    e.item = static_cast<std::int32_t>(to_int(fields[1], path, file.line_no(i)));
    e.value = to_real(fields[2], path, file.line_no(i));
    if (e.user < 0 || e.user >= ds.n_users || e.item < 0 || e.item >= ds.n_items)
      throw ParseError(path, file.line_no(i), "entry out of range");
    if (e.value < ds.scale_min || e.value > ds.scale_max)
      throw ParseError(path, file.line_no(i), "rating outside the declared scale");
    ds.entries.push_back(e);
  }
  ds.update_global_mean();
  return ds;
}

void save_attributes_tsv(const AttributeTable& table, const std::string& path) {
  const std::int32_t n_attrs = table.attribute_count();
  if (n_attrs == 0) throw ConfigError("attribute table has no attributes");
  if (table.vocab.size() != static_cast<std::size_t>(n_attrs))
    throw ConfigError("attribute table is missing vocabulary strings");

  std::string out;
  out += "# attributes 1\n";
  out += "# n_entities " + std::to_string(table.n_entities) + "\n";
  for (std::int32_t j = 0; j < n_attrs; ++j) {
    check_field_text(table.attribute_names[j], "attribute name");
    if (table.attribute_names[j].empty()) throw ConfigError("empty attribute name");
    out += table.attribute_names[j];
    out += j + 1 < n_attrs ? '\t' : '\n';
  }
  for (std::int32_t i = 0; i < table.n_entities; ++i) {
    for (std::int32_t j = 0; j < n_attrs; ++j) {
      std::int32_t id = table.cells(i, j);
      if (id < 0 || static_cast<std::size_t>(id) >= table.vocab[j].size())
        throw ConfigError("cell value id outside the vocabulary");
      check_field_text(table.vocab[j][id], "attribute value");
      out += table.vocab[j][id];
      out += j + 1 < n_attrs ? '\t' : '\n';
    }
  }
  write_file(path, out);
}

AttributeTable load_attributes_tsv(const std::string& path) {
  ParsedFile file = parse_interchange(path, "attributes");
  std::int64_t n_entities = to_int(file.require("n_entities"), path, 1);

  std::size_t i = file.first_data;
  if (i >= file.lines.size()) throw ParseError(path, file.line_no(i), "missing header row");
  std::vector<std::string> names = split_tabs(file.lines[i]);
  for (const auto& name : names)
    if (name.empty()) throw ParseError(path, file.line_no(i), "empty attribute name");

  std::vector<std::vector<std::string>> rows;
  for (++i; i < file.lines.size(); ++i) {
    auto fields = split_tabs(file.lines[i]);
    if (fields.size() != names.size())
      throw ParseError(path, file.line_no(i),
                       "expected " + std::to_string(names.size()) + " fields");
    rows.push_back(std::move(fields));
  }
  if (static_cast<std::int64_t>(rows.size()) != n_entities)
    throw ParseError(path, 1, "row count does not match n_entities");
  return attribute_table_from_rows(names, rows);
}

void save_neighbor_graph(const NeighborGraph& graph, const std::string& path) {
  if (graph.neighbors.size() != static_cast<std::size_t>(graph.n_entities))
    throw ConfigError("graph row count does not match n_entities");
  std::string out;
  out += "# neighbor_graph 1\n";
  out += "# n_entities " + std::to_string(graph.n_entities) + "\n";
  out += std::string("# normalized ") + (graph.normalized ? "1" : "0") + "\n";
  for (std::int32_t i = 0; i < graph.n_entities; ++i) {
    out += std::to_string(i);
    const auto& list = graph.neighbors[i];
    for (std::size_t k = 0; k < list.size(); ++k) {
      out += k == 0 ? '\t' : ',';
      out += std::to_string(list[k].index);
      out += ':';
      out += format_real(list[k].weight, 12);
    }
    out += '\n';
  }
  write_file(path, out);
}

NeighborGraph load_neighbor_graph(const std::string& path) {
  ParsedFile file = parse_interchange(path, "neighbor_graph");
  NeighborGraph graph;
  graph.n_entities = static_cast<std::int32_t>(to_int(file.require("n_entities"), path, 1));
  graph.normalized = to_int(file.require("normalized"), path, 1) != 0;
  if (graph.n_entities < 0) throw ParseError(path, 1, "negative entity count");
  graph.neighbors.resize(graph.n_entities);

  std::size_t i = file.first_data;
  for (std::int32_t row = 0; row < graph.n_entities; ++row, ++i) {
    if (i >= file.lines.size()) throw ParseError(path, file.line_no(i), "missing graph row");
    auto fields = split_tabs(file.lines[i]);
    if (fields.empty() || fields.size() > 2)
      throw ParseError(path, file.line_no(i), "expected index and neighbor list");
    if (to_int(fields[0], path, file.line_no(i)) != row)
      throw ParseError(path, file.line_no(i), "graph rows must be in index order");
    if (fields.size() == 1 || fields[1].empty()) continue;

    auto& list = graph.neighbors[row];
    std::size_t start = 0;
    const std::string& text = fields[1];
    while (start <= text.size()) {
      std::size_t comma = text.find(',', start);
      std::string item =
          text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      std::size_t colon = item.find(':');
      if (colon == std::string::npos)
        throw ParseError(path, file.line_no(i), "expected neighbor:weight");
      Neighbor nb;
      nb.index =
          static_cast<std::int32_t>(to_int(item.substr(0, colon), path, file.line_no(i)));
      nb.weight = to_real(item.substr(colon + 1), path, file.line_no(i));
      if (nb.index < 0 || nb.index >= graph.n_entities || nb.index == row)
        throw ParseError(path, file.line_no(i), "neighbor index out of range");
      if (!std::isfinite(nb.weight))
        throw ParseError(path, file.line_no(i), "non-finite neighbor weight");
      list.push_back(nb);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (i != file.lines.size()) throw ParseError(path, file.line_no(i), "trailing content");

  // Serialization rounds weights to 12 significant digits; restore the
  // normalization invariant and the canonical ordering.
  for (auto& list : graph.neighbors) {
    if (graph.normalized && !list.empty()) {
      Real sum = 0.0;
      for (const auto& nb : list) sum += nb.weight;
      if (sum > 0.0)
        for (auto& nb : list) nb.weight /= sum;
    }
    std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) {
      if (a.weight != b.weight) return a.weight > b.weight;
      return a.index < b.index;
    });
  }
  return graph;
}

void save_model(const FactorModel& model, Variant variant, const std::string& config_echo,
                const std::string& path) {
  check_field_text(config_echo, "config echo");
  std::string out;
  out += "# model 1\n";
  out += "# n_users " + std::to_string(model.n_users()) + "\n";
  out += "# n_items " + std::to_string(model.n_items()) + "\n";
  out += "# dim " + std::to_string(model.dim()) + "\n";
  out += "# offset " + format_real(model.offset, 17) + "\n";
  out += "# scale_min " + format_real(model.scale_min, 17) + "\n";
  out += "# scale_max " + format_real(model.scale_max, 17) + "\n";
  out += std::string("# variant ") + variant_name(variant) + "\n";
  out += "# config " + config_echo + "\n";
  auto append_rows = [&out](const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c > 0) out += '\t';
        out += format_real(m(r, c), 17);
      }
      out += '\n';
    }
  };
  append_rows(model.user_factors);
  append_rows(model.item_factors);
  write_file(path, out);
}

LoadedModel load_model(const std::string& path) {
  ParsedFile file = parse_interchange(path, "model");
  LoadedModel loaded;
  std::int32_t n = static_cast<std::int32_t>(to_int(file.require("n_users"), path, 1));
  std::int32_t m = static_cast<std::int32_t>(to_int(file.require("n_items"), path, 1));
  std::int32_t d = static_cast<std::int32_t>(to_int(file.require("dim"), path, 1));
  if (n < 0 || m < 0 || d < 1) throw ParseError(path, 1, "bad model dimensions");
  loaded.model.offset = to_real(file.require("offset"), path, 1);
  loaded.model.scale_min = to_real(file.require("scale_min"), path, 1);
  loaded.model.scale_max = to_real(file.require("scale_max"), path, 1);
  loaded.variant = variant_from_name(file.require("variant"));
  auto cfg = file.meta.find("config");
  loaded.config_echo = cfg == file.meta.end() ? "" : cfg->second;

  loaded.model.user_factors.resize(n, d);
  loaded.model.item_factors.resize(m, d);
  std::size_t i = file.first_data;
  auto read_rows = [&](Matrix& mat) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r, ++i) {
      if (i >= file.lines.size()) throw ParseError(path, file.line_no(i), "missing factor row");
      auto fields = split_tabs(file.lines[i]);
      if (fields.size() != static_cast<std::size_t>(d))
        throw ParseError(path, file.line_no(i),
                         "expected " + std::to_string(d) + " factor columns");
      for (Eigen::Index c = 0; c < mat.cols(); ++c)
        mat(r, c) = to_real(fields[c], path, file.line_no(i));
    }
  };
  read_rows(loaded.model.user_factors);
  read_rows(loaded.model.item_factors);
  if (i != file.lines.size()) throw ParseError(path, file.line_no(i), "trailing content");
  return loaded;
}

void save_trace_tsv(const TrainTrace& trace, const std::string& path) {
  std::string out;
  out += "# trace 1\n";
  out += "epoch\tobjective\tgradient_norm\n";
  for (std::size_t e = 0; e < trace.epochs.size(); ++e) {
    out += std::to_string(e + 1);
    out += '\t';
    out += format_real(trace.epochs[e].objective, 17);
    out += '\t';
    out += format_real(trace.epochs[e].gradient_norm, 17);
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace cmf
