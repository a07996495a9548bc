#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rydtx/errors.hpp"

namespace rydtx {

/// Number of runs per detected-event count. Stored densely from zero events
/// up to the largest observed count.
class CountHistogram {
 public:
  CountHistogram() = default;

  template <typename Int>
  static CountHistogram from_samples(std::span<const Int> samples) {
    CountHistogram h;
    for (auto s : samples) h.add(static_cast<std::int64_t>(s));
    return h;
  }

  void add(std::int64_t events, std::uint64_t runs = 1) {
    if (events < 0) throw DomainError("histogram keys must be non-negative");
    const auto idx = static_cast<std::size_t>(events);
    if (idx >= bins_.size()) bins_.resize(idx + 1, 0);
    bins_[idx] += runs;
    total_ += runs;
  }

  std::uint64_t count(std::int64_t events) const {
    if (events < 0 || static_cast<std::size_t>(events) >= bins_.size()) return 0;
    return bins_[static_cast<std::size_t>(events)];
  }

  std::uint64_t total() const noexcept { return total_; }
  bool empty() const noexcept { return total_ == 0; }

  /// Largest key with a non-zero count, or -1 when empty.
  std::int64_t max_events() const noexcept {
    for (std::size_t i = bins_.size(); i-- > 0;)
      if (bins_[i] != 0) return static_cast<std::int64_t>(i);
    return -1;
  }

  std::span<const std::uint64_t> bins() const noexcept { return bins_; }

  double mean() const {
    if (total_ == 0) throw InsufficientDataError("mean of an empty histogram");
    long double s = 0;
    for (std::size_t i = 0; i < bins_.size(); ++i) s += static_cast<long double>(i) * bins_[i];
    return static_cast<double>(s / total_);
  }

  /// Sample variance with n - 1 normalisation.
  double variance() const {
    if (total_ < 2) throw InsufficientDataError("variance needs at least two runs");
    const long double m = mean();
    long double ss = 0;
    for (std::size_t i = 0; i < bins_.size(); ++i) {
      const long double d = static_cast<long double>(i) - m;
      ss += d * d * bins_[i];
    }
    return static_cast<double>(ss / (total_ - 1));
  }

  friend bool operator==(const CountHistogram& a, const CountHistogram& b) {
    if (a.total_ != b.total_) return false;
    const auto n = std::max(a.bins_.size(), b.bins_.size());
    for (std::size_t i = 0; i < n; ++i)
      if (a.count(static_cast<std::int64_t>(i)) != b.count(static_cast<std::int64_t>(i))) return false;
    return true;
  }

 private:
  std::vector<std::uint64_t> bins_;
  std::uint64_t total_ = 0;
};

}  // namespace rydtx
