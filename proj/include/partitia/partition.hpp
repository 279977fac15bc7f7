#pragma once

// Integer partitions in occupation-count form: counts[j] is the number of
// parts of size j.  This is the natural coordinate system here because every
// probability weight in the toolkit depends on a partition only through its
// multiplicities, and the dynamics edits single multiplicities.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

namespace partitia {

class Partition {
 public:
  using Counts = std::map<std::uint64_t, std::uint64_t>;

  Partition() = default;

  static Partition from_parts(const std::vector<std::uint64_t>& parts) {
    Partition p;
    for (auto j : parts) p.add_part(j);
    return p;
  }

  std::uint64_t total() const { return total_; }
  bool empty() const { return total_ == 0; }

  std::uint64_t count(std::uint64_t j) const {
    auto it = counts_.find(j);
    return it == counts_.end() ? 0 : it->second;
  }

  void add_part(std::uint64_t j, std::uint64_t k = 1) {
    if (j == 0) throw std::invalid_argument("add_part: parts are >= 1");
    if (k == 0) return;
    counts_[j] += k;
    total_ += j * k;
  }

  void remove_part(std::uint64_t j, std::uint64_t k = 1) {
    if (k == 0) return;
    auto it = counts_.find(j);
    if (it == counts_.end() || it->second < k)
      throw std::invalid_argument("remove_part: no part of that size");
    it->second -= k;
    if (it->second == 0) counts_.erase(it);
    total_ -= j * k;
  }

  std::uint64_t num_parts() const {
    std::uint64_t k = 0;
    for (auto& [j, r] : counts_) k += r;
    return k;
  }

  std::uint64_t largest_part() const {
    return counts_.empty() ? 0 : counts_.rbegin()->first;
  }

  const Counts& counts() const { return counts_; }

  std::vector<std::uint64_t> parts() const {
    std::vector<std::uint64_t> out;
    for (auto it = counts_.rbegin(); it != counts_.rend(); ++it)
      for (std::uint64_t k = 0; k < it->second; ++k) out.push_back(it->first);
    return out;
  }

  bool operator==(const Partition& o) const { return counts_ == o.counts_; }
  bool operator<(const Partition& o) const {
    if (total_ != o.total_) return total_ < o.total_;
    return counts_ < o.counts_;
  }

 private:
  Counts counts_;
  std::uint64_t total_ = 0;
};

// All partitions of m, generated with nonincreasing part sizes.  Intended for
// oracle tests and exact enumeration at small m.
inline std::vector<Partition> partitions_of(std::uint64_t m) {
  std::vector<Partition> out;
  std::vector<std::uint64_t> parts;
  auto rec = [&](auto&& self, std::uint64_t rem, std::uint64_t max_part) -> void {
    if (rem == 0) {
      out.push_back(Partition::from_parts(parts));
      return;
    }
    for (std::uint64_t j = std::min(rem, max_part); j >= 1; --j) {
      parts.push_back(j);
      self(self, rem - j, j);
      parts.pop_back();
    }
  };
  rec(rec, m, m == 0 ? 1 : m);
  return out;
}

// All ways to write n as an ordered sum of `slots` nonnegative integers.
inline std::vector<std::vector<std::uint64_t>> compositions_of(std::uint64_t n,
                                                               std::size_t slots) {
  std::vector<std::vector<std::uint64_t>> out;
  std::vector<std::uint64_t> cur(slots, 0);
  auto rec = [&](auto&& self, std::size_t i, std::uint64_t rem) -> void {
    if (i + 1 == slots) {
      cur[i] = rem;
      out.push_back(cur);
      return;
    }
    for (std::uint64_t v = 0; v <= rem; ++v) {
      cur[i] = v;
      self(self, i + 1, rem - v);
    }
  };
  if (slots == 0) {
    if (n == 0) out.push_back({});
    return out;
  }
  rec(rec, 0, n);
  return out;
}

}  // namespace partitia
