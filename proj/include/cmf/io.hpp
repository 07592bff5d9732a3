#pragma once

#include "cmf/types.hpp"

#include <string>

namespace cmf {

/// Plain-text interchange between pipeline stages. Each table is one
/// tab-separated file with `# key value` metadata lines, a header row, then
/// data rows. Writing is deterministic: identical inputs produce identical
/// bytes.

void save_ratings_tsv(const RatingDataset& ds, const std::string& path);
RatingDataset load_ratings_tsv(const std::string& path);

/// Attribute cells are written as their vocabulary strings, missing as the
/// empty field. Loading reassigns value ids by first appearance (missing is
/// always id 0), which reproduces the parser's assignment.
void save_attributes_tsv(const AttributeTable& table, const std::string& path);
AttributeTable load_attributes_tsv(const std::string& path);

/// One line per entity: `idx<TAB>neighbor:weight,...`, weights at 12
/// significant digits. The normalized flag travels in the metadata; loading
/// a normalized graph renormalizes each list to remove serialization
/// rounding.
void save_neighbor_graph(const NeighborGraph& graph, const std::string& path);
NeighborGraph load_neighbor_graph(const std::string& path);

/// Header lines (#, m, d, offset, scale, variant, config echo) followed by
/// the P rows then the Q rows at 17 significant digits; loading reproduces
/// predictions bit-exactly.
void save_model(const FactorModel& model, Variant variant, const std::string& config_echo,
                const std::string& path);

struct LoadedModel {
  FactorModel model;
  Variant variant = Variant::CMF;
  std::string config_echo;
};

LoadedModel load_model(const std::string& path);

/// epoch, objective, gradient norm per accepted epoch. Wall time stays in
/// memory so that outputs are reproducible byte for byte.
void save_trace_tsv(const TrainTrace& trace, const std::string& path);

/// Shortest-ish deterministic formatting helpers used by every writer.
std::string format_real(Real value, int significant_digits);

}  // namespace cmf
