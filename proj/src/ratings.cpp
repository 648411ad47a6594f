#include "gate/ratings.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "gate/error.hpp"
#include "gate/text.hpp"

namespace gate {

std::vector<RawRating> read_ratings_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file: " + path.string());
  std::vector<RawRating> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected user<TAB>item[<TAB>rating]");
    }
    RawRating r{std::string(fields[0]), std::string(fields[1]), 1.0, false};
    if (fields.size() == 3) {
      const auto f = fields[2];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), r.score);
      if (ec != std::errc{} || ptr != f.data() + f.size()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad rating '" +
                        std::string(f) + "'");
      }
      r.has_score = true;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawPair> binarize_ratings(std::span<const RawRating> raw, double threshold,
                                      bool prebinarized) {
  std::vector<RawPair> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    if (prebinarized || !r.has_score || r.score >= threshold) out.push_back({r.user, r.item});
  }
  return out;
}

FilteredInteractions filter_sparse(std::span<const RawPair> pairs, const FilterThresholds& th) {
  // Intern ids in order of first appearance.
  std::unordered_map<std::string, Id> user_ix, item_ix;
  std::vector<std::string> user_names, item_names;
  std::vector<Interaction> edges;
  edges.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto [ui, unew] = user_ix.try_emplace(p.user, static_cast<Id>(user_names.size()));
    if (unew) user_names.push_back(p.user);
    auto [ii, inew] = item_ix.try_emplace(p.item, static_cast<Id>(item_names.size()));
    if (inew) item_names.push_back(p.item);
    edges.push_back({ui->second, ii->second});
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<bool> user_alive(user_names.size(), true), item_alive(item_names.size(), true);
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<std::size_t> ucount(user_names.size(), 0), icount(item_names.size(), 0);
    for (const auto& e : edges) {
      if (user_alive[e.user] && item_alive[e.item]) {
        ++ucount[e.user];
        ++icount[e.item];
      }
    }
    for (std::size_t u = 0; u < ucount.size(); ++u) {
      if (user_alive[u] && ucount[u] < th.min_user_ratings) {
        user_alive[u] = false;
        changed = true;
      }
    }
    for (std::size_t i = 0; i < icount.size(); ++i) {
      if (item_alive[i] && icount[i] < th.min_item_ratings) {
        item_alive[i] = false;
        changed = true;
      }
    }
  }

  // Dense remap keeps first-appearance order among survivors.
  constexpr Id kDropped = static_cast<Id>(-1);
  FilteredInteractions out;
  std::vector<Id> user_map(user_names.size(), kDropped), item_map(item_names.size(), kDropped);
  for (const auto& p : pairs) {
    const Id u = user_ix[p.user], i = item_ix[p.item];
    if (!user_alive[u] || !item_alive[i]) continue;
    if (user_map[u] == kDropped) {
      user_map[u] = static_cast<Id>(out.user_names.size());
      out.user_names.push_back(user_names[u]);
    }
    if (item_map[i] == kDropped) {
      item_map[i] = static_cast<Id>(out.item_names.size());
      out.item_names.push_back(item_names[i]);
    }
  }
  for (const auto& e : edges) {
    if (user_alive[e.user] && item_alive[e.item]) out.pairs.push_back({user_map[e.user], item_map[e.item]});
  }
  if (out.pairs.empty()) {
    throw DataError("no interactions survive filtering (users >= " +
                    std::to_string(th.min_user_ratings) + ", items >= " +
                    std::to_string(th.min_item_ratings) +
                    " ratings); relax the thresholds or supply more data");
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

SparseBinaryRatings::SparseBinaryRatings(std::size_t num_users, std::size_t num_items,
                                         std::span<const Interaction> pairs)
    : by_user_(num_users), by_item_(num_items) {
  for (const auto& p : pairs) {
    if (p.user >= num_users || p.item >= num_items) {
      throw DataError("interaction (" + std::to_string(p.user) + ", " + std::to_string(p.item) +
                      ") out of range for " + std::to_string(num_users) + "x" +
                      std::to_string(num_items) + " matrix");
    }
    by_user_[p.user].push_back(p.item);
    by_item_[p.item].push_back(p.user);
  }
  auto normalize = [](std::vector<Id>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  nnz_ = 0;
  for (auto& v : by_user_) {
    normalize(v);
    nnz_ += v.size();
  }
  for (auto& v : by_item_) normalize(v);
}

bool SparseBinaryRatings::contains(Id user, Id item) const {
  const auto& v = by_user_.at(user);
  return std::binary_search(v.begin(), v.end(), item);
}

std::vector<Interaction> SparseBinaryRatings::pairs() const {
  std::vector<Interaction> out;
  out.reserve(nnz_);
  for (Id u = 0; u < by_user_.size(); ++u)
    for (Id i : by_user_[u]) out.push_back({u, i});
  return out;
}

std::vector<double> SparseBinaryRatings::item_column(Id item) const {
  std::vector<double> col(num_users(), 0.0);
  for (Id u : users_of(item)) col[u] = 1.0;
  return col;
}

}  // namespace gate
