#include "fq/ecdf.hpp"

#include <algorithm>

namespace fq {

void Ecdf::insert(Ms sample) {
  if (sample < 0) return;
  if (window_ > 0 && order_.size() == window_) {
    Ms oldest = order_.front();
    order_.pop_front();
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), oldest);
    sorted_.erase(it);  // lower_bound hits an existing element by construction
  }
  order_.push_back(sample);
  sorted_.insert(std::upper_bound(sorted_.begin(), sorted_.end(), sample), sample);
}

double Ecdf::cdf(Ms t) const {
  if (sorted_.empty() || t < 0) return 0.0;
  auto it = std::upper_bound(sorted_.begin(), sorted_.end(), t);
  auto le = static_cast<double>(it - sorted_.begin());
  return le / (static_cast<double>(sorted_.size()) + 1.0);
}

double conditional_return_prob(const Ecdf& e, Ms t_now, Ms t_fut, Ms t_dispatch) {
  double f_now = e.cdf(t_now - t_dispatch);
  double f_fut = e.cdf(t_fut - t_dispatch);
  double p = (f_fut - f_now) / (1.0 - f_now);
  if (p < 0.0) return 0.0;
  if (p > 1.0) return 1.0;
  return p;
}

const std::vector<Ms>& bootstrap_samples() {
  static const std::vector<Ms> samples = {
      75,   110,  140,  169,  198,  226,  255,  285,  316,  348,
      381,  416,  452,  490,  530,  573,  618,  665,  717,  771,
      830,  893,  962,  1036, 1118, 1207, 1306, 1416, 1540, 1679,
      1839, 2025, 2243, 2505, 2828, 3239, 3787, 4572, 5842, 8512};
  return samples;
}

DistributionStore::DistributionStore(std::size_t window)
    : window_(window), global_(window), bootstrap_(window) {
  for (Ms s : bootstrap_samples()) bootstrap_.insert(s);
}

void DistributionStore::observe(const std::string& cls, Ms sample) {
  if (sample < 0) return;
  auto it = by_class_.find(cls);
  if (it == by_class_.end()) it = by_class_.emplace(cls, Ecdf(window_)).first;
  it->second.insert(sample);
  global_.insert(sample);
}

const Ecdf& DistributionStore::lookup(const std::string& cls) const {
  auto it = by_class_.find(cls);
  if (it != by_class_.end() && !it->second.empty()) return it->second;
  if (!global_.empty()) return global_;
  return bootstrap_;
}

const Ecdf& DistributionStore::global() const {
  if (!global_.empty()) return global_;
  return bootstrap_;
}

void DistributionStore::import_global(const std::vector<Ms>& samples) {
  for (Ms s : samples) global_.insert(s);
}

void DistributionStore::import_class(const std::string& cls, const std::vector<Ms>& samples) {
  auto it = by_class_.find(cls);
  if (it == by_class_.end()) it = by_class_.emplace(cls, Ecdf(window_)).first;
  for (Ms s : samples) it->second.insert(s);
}

}  // namespace fq
