#pragma once

// A spatial partition state: for each lattice site x, the multiset of
// component sizes rooted there, stored sparsely as occupation numbers
// r_{x,j}.  Only bookkeeping lives here; probability weights and dynamics
// are layered on top.

#include <cstdint>
#include <map>
#include <stdexcept>

#include "partitia/lattice.hpp"
#include "partitia/partition.hpp"

namespace partitia {

class SpatialPartitionState {
 public:
  using SiteMap = std::map<Site, Partition>;

  SpatialPartitionState() = default;

  const SiteMap& sites() const { return map_; }
  std::uint64_t total() const { return n_; }
  bool empty() const { return map_.empty(); }

  // mass at site x
  std::uint64_t eta(const Site& x) const {
    auto it = map_.find(x);
    return it == map_.end() ? 0 : it->second.total();
  }

  // occupation number r_{x,j}
  std::uint64_t r(const Site& x, std::uint64_t j) const {
    auto it = map_.find(x);
    return it == map_.end() ? 0 : it->second.count(j);
  }

  void add_part(const Site& x, std::uint64_t j, std::uint64_t k = 1) {
    if (k == 0) return;
    map_[x].add_part(j, k);
    n_ += j * k;
  }

  void remove_part(const Site& x, std::uint64_t j, std::uint64_t k = 1) {
    if (k == 0) return;
    auto it = map_.find(x);
    if (it == map_.end()) throw std::invalid_argument("remove_part: empty site");
    it->second.remove_part(j, k);
    n_ -= j * k;
    if (it->second.total() == 0) map_.erase(it);
  }

  void clear_site(const Site& x) {
    auto it = map_.find(x);
    if (it == map_.end()) return;
    n_ -= it->second.total();
    map_.erase(it);
  }

  void set_site(const Site& x, const Partition& p) {
    clear_site(x);
    if (p.total() == 0) return;
    n_ += p.total();
    map_[x] = p;
  }

  // aggregate occupation r_j = sum_x r_{x,j}
  std::map<std::uint64_t, std::uint64_t> size_counts() const {
    std::map<std::uint64_t, std::uint64_t> out;
    for (const auto& [x, p] : map_) {
      for (const auto& [j, r] : p.counts()) out[j] += r;
    }
    return out;
  }

  // mass at the origin
  std::uint64_t origin_mass() const { return eta(make_site(0)); }

  // largest site mass
  std::uint64_t max_site_mass() const {
    std::uint64_t best = 0;
    for (const auto& [x, p] : map_) best = std::max(best, p.total());
    return best;
  }

  // largest component size anywhere
  std::uint64_t max_component() const {
    std::uint64_t best = 0;
    for (const auto& [x, p] : map_) best = std::max(best, p.largest_part());
    return best;
  }

  std::uint64_t num_components() const {
    std::uint64_t s = 0;
    for (const auto& [x, p] : map_) s += p.num_parts();
    return s;
  }

  std::uint64_t num_occupied_sites() const { return map_.size(); }

  bool operator==(const SpatialPartitionState& o) const { return map_ == o.map_; }
  bool operator<(const SpatialPartitionState& o) const { return map_ < o.map_; }

 private:
  SiteMap map_;
  std::uint64_t n_ = 0;
};

}  // namespace partitia
