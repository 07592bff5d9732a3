#include "cmf/ratings_index.hpp"

#include "cmf/errors.hpp"

#include <algorithm>

namespace cmf {

namespace {

// Sorts a [begin, end) run of parallel key/value arrays by key.
void sort_run(std::vector<std::int32_t>& keys, std::vector<Real>& values, std::int32_t begin,
              std::int32_t end) {
  std::vector<std::int32_t> order(end - begin);
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = begin + static_cast<std::int32_t>(k);
  std::sort(order.begin(), order.end(),
            [&](std::int32_t a, std::int32_t b) { return keys[a] < keys[b]; });
  std::vector<std::int32_t> tmp_keys(order.size());
  std::vector<Real> tmp_values(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    tmp_keys[k] = keys[order[k]];
    tmp_values[k] = values[order[k]];
  }
  std::copy(tmp_keys.begin(), tmp_keys.end(), keys.begin() + begin);
  std::copy(tmp_values.begin(), tmp_values.end(), values.begin() + begin);
}

}  // namespace

RatingsIndex::RatingsIndex(const RatingDataset& ds)
    : n_users(ds.n_users),
      n_items(ds.n_items),
      scale_min(ds.scale_min),
      scale_max(ds.scale_max) {
  if (n_users < 0 || n_items < 0) throw ConfigError("negative entity count");

  user_offsets.assign(n_users + 1, 0);
  item_offsets.assign(n_items + 1, 0);
  for (const auto& e : ds.entries) {
    if (e.user < 0 || e.user >= n_users || e.item < 0 || e.item >= n_items)
      throw ConfigError("rating entry out of range");
    ++user_offsets[e.user + 1];
    ++item_offsets[e.item + 1];
  }
  for (std::int32_t u = 0; u < n_users; ++u) user_offsets[u + 1] += user_offsets[u];
  for (std::int32_t i = 0; i < n_items; ++i) item_offsets[i + 1] += item_offsets[i];

  user_items.resize(ds.entries.size());
  user_values.resize(ds.entries.size());
  item_users.resize(ds.entries.size());
  item_values.resize(ds.entries.size());

  std::vector<std::int32_t> ucur(user_offsets.begin(), user_offsets.end() - 1);
  std::vector<std::int32_t> icur(item_offsets.begin(), item_offsets.end() - 1);
  long double total = 0.0L;
  user_sum_.assign(n_users, 0.0);
  item_sum_.assign(n_items, 0.0);
  for (const auto& e : ds.entries) {
    user_items[ucur[e.user]] = e.item;
    user_values[ucur[e.user]++] = e.value;
    item_users[icur[e.item]] = e.user;
    item_values[icur[e.item]++] = e.value;
    user_sum_[e.user] += e.value;
    item_sum_[e.item] += e.value;
    total += e.value;
  }
  global_mean = ds.entries.empty() ? 0.0 : static_cast<Real>(total / ds.entries.size());

  // Duplicate (user, item) pairs were collapsed at parse time, so sorting
  // each run by id gives an unambiguous order and enables bisection.
  for (std::int32_t u = 0; u < n_users; ++u)
    sort_run(user_items, user_values, user_offsets[u], user_offsets[u + 1]);
  for (std::int32_t i = 0; i < n_items; ++i)
    sort_run(item_users, item_values, item_offsets[i], item_offsets[i + 1]);
}

Real RatingsIndex::user_mean(std::int32_t u) const {
  std::int32_t n = user_count(u);
  return n == 0 ? global_mean : user_sum_[u] / static_cast<Real>(n);
}

Real RatingsIndex::item_mean(std::int32_t i) const {
  std::int32_t n = item_count(i);
  return n == 0 ? global_mean : item_sum_[i] / static_cast<Real>(n);
}

std::optional<Real> RatingsIndex::rating(std::int32_t u, std::int32_t i) const {
  auto begin = user_items.begin() + user_offsets[u];
  auto end = user_items.begin() + user_offsets[u + 1];
  auto it = std::lower_bound(begin, end, i);
  if (it == end || *it != i) return std::nullopt;
  return user_values[static_cast<std::size_t>(it - user_items.begin())];
}

}  // namespace cmf
