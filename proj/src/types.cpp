#include "cmf/types.hpp"

#include "cmf/errors.hpp"

#include <unordered_map>

namespace cmf {

void RatingDataset::update_global_mean() {
  if (entries.empty()) {
    global_mean = 0.0;
    return;
  }
  long double sum = 0.0L;
  for (const RatingEntry& e : entries) sum += e.value;
  global_mean = static_cast<Real>(sum / static_cast<long double>(entries.size()));
}

AttributeTable attribute_table_from_rows(
    const std::vector<std::string>& attribute_names,
    const std::vector<std::vector<std::string>>& rows) {
  const std::int32_t n = static_cast<std::int32_t>(rows.size());
  const std::int32_t j_count = static_cast<std::int32_t>(attribute_names.size());

  AttributeTable table;
  table.n_entities = n;
  table.attribute_names = attribute_names;
  table.cells.resize(n, j_count);
  table.vocab.assign(j_count, {""});  // id 0 reserved for the missing sentinel
  table.missing_id.assign(j_count, 0);

  std::vector<std::unordered_map<std::string, std::int32_t>> lookup(j_count);
  for (std::int32_t i = 0; i < n; ++i) {
    if (static_cast<std::int32_t>(rows[i].size()) != j_count)
      throw ConfigError("attribute row " + std::to_string(i) + " has " +
                        std::to_string(rows[i].size()) + " fields, expected " +
                        std::to_string(j_count));
    for (std::int32_t j = 0; j < j_count; ++j) {
      const std::string& value = rows[i][j];
      if (value.empty()) {
        table.cells(i, j) = table.missing_id[j];
        continue;
      }
      auto [it, inserted] = lookup[j].try_emplace(
          value, static_cast<std::int32_t>(table.vocab[j].size()));
      if (inserted) table.vocab[j].push_back(value);
      table.cells(i, j) = it->second;
    }
  }
  return table;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::CMF: return "CMF";
    case Variant::PMF: return "PMF";
    case Variant::RSVD: return "RSVD";
    case Variant::ISMF: return "ISMF";
    case Variant::PSMF: return "PSMF";
    case Variant::CSMF: return "CSMF";
    case Variant::JSMF: return "JSMF";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::CMF, Variant::PMF, Variant::RSVD, Variant::ISMF,
                    Variant::PSMF, Variant::CSMF, Variant::JSMF}) {
    if (name == variant_name(v)) return v;
  }
  throw ConfigError("unknown variant: " + name);
}

}  // namespace cmf
