#pragma once
// Empirical response-time distributions with a bootstrap prior.
//
// An Ecdf holds up to `window` most-recent samples (FIFO eviction) and
// answers F(t) = (#samples <= t) / (n + 1).  The +1 keeps F strictly
// below 1 so "this device will certainly have returned" is never assumed;
// the residual mass models devices that never come back within any bound.

#include <cstddef>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "fq/common.hpp"

namespace fq {

class Ecdf {
public:
  explicit Ecdf(std::size_t window = 10000) : window_(window) {}

  // Rejects negative durations (clock skew artifacts) by ignoring them.
  void insert(Ms sample);

  // F(t) = (#samples <= t) / (n + 1).  0 when empty or t < 0.
  double cdf(Ms t) const;

  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }

  const std::vector<Ms>& sorted_samples() const { return sorted_; }

private:
  std::size_t window_;
  std::deque<Ms> order_;    // insertion order, for FIFO eviction
  std::vector<Ms> sorted_;  // kept sorted, for binary-searched cdf
};

// Probability that a task dispatched at t_dispatch and still pending at
// t_now returns by t_fut, conditioned on it not having returned yet:
//   [F(t_fut - t_d) - F(t_now - t_d)] / [1 - F(t_now - t_d)]
// Clamped to [0, 1]; the denominator is always positive because F < 1.
double conditional_return_prob(const Ecdf& e, Ms t_now, Ms t_fut, Ms t_dispatch);

// Synthetic prior used before any real responses exist: 40 quantiles of a
// lognormal fit of typical mobile round-trip latencies (median ~0.8s, heavy
// right tail out past 8s).  Keeps the planner sane on a cold start.
const std::vector<Ms>& bootstrap_samples();

// Per-query-class distributions keyed by artifact hash, with fallback:
// class table -> global table -> bootstrap prior.  Observations feed both
// the class and the global table.
class DistributionStore {
public:
  explicit DistributionStore(std::size_t window = 10000);

  void observe(const std::string& cls, Ms sample);

  // Never returns an empty distribution.
  const Ecdf& lookup(const std::string& cls) const;

  const Ecdf& global() const;

  // Snapshot support: raw access plus import paths that feed exactly one table.
  const std::map<std::string, Ecdf>& classes() const { return by_class_; }
  const Ecdf& global_raw() const { return global_; }
  void import_global(const std::vector<Ms>& samples);
  void import_class(const std::string& cls, const std::vector<Ms>& samples);

private:
  std::size_t window_;
  std::map<std::string, Ecdf> by_class_;
  Ecdf global_;
  Ecdf bootstrap_;
};

}  // namespace fq
