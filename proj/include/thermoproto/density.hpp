#pragma once

// Temperature histograms, interval probabilities and Gaussian kernel density
// estimates, plus the fixed-grid feature vector used by the classifier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "thermoproto/error.hpp"

namespace thermoproto {

// h(x) = N_x / N over bins [origin + k*width, origin + (k+1)*width).
// Only the occupied range first_bin..first_bin+size-1 is stored.
class TemperatureHistogram {
 public:
  TemperatureHistogram(std::span<const double> samples, double bin_origin, double bin_width)
      : bin_origin_(bin_origin), bin_width_(bin_width), n_samples_(samples.size()) {
    require(!samples.empty(), "histogram needs at least one sample");
    require(bin_width > 0.0 && std::isfinite(bin_width), "bin width must be > 0");
    require(std::isfinite(bin_origin), "bin origin must be finite");
    std::vector<std::int64_t> idx;
    idx.reserve(samples.size());
    for (double t : samples) {
      require(std::isfinite(t), "histogram sample is not finite");
      idx.push_back(bin_index(t));
    }
    const auto [lo, hi] = std::minmax_element(idx.begin(), idx.end());
    first_bin_ = *lo;
    counts_.assign(static_cast<std::size_t>(*hi - *lo + 1), 0);
    for (auto k : idx) ++counts_[static_cast<std::size_t>(k - first_bin_)];

    probs_.reserve(counts_.size());
    cumulative_.reserve(counts_.size() + 1);
    cumulative_.push_back(0);
    for (auto c : counts_) {
      probs_.push_back(static_cast<double>(c) / static_cast<double>(n_samples_));
      cumulative_.push_back(cumulative_.back() + c);
    }
  }

  double bin_origin() const { return bin_origin_; }
  double bin_width() const { return bin_width_; }
  std::size_t n_samples() const { return n_samples_; }
  std::int64_t first_bin() const { return first_bin_; }
  const std::vector<double>& probs() const { return probs_; }
  const std::vector<std::size_t>& counts() const { return counts_; }

  std::int64_t bin_index(double t) const {
    return static_cast<std::int64_t>(std::floor((t - bin_origin_) / bin_width_));
  }

  double bin_lower(std::int64_t k) const { return bin_origin_ + static_cast<double>(k) * bin_width_; }

  // Bin-aligned support: lower edge of the lowest occupied bin and upper edge
  // of the highest one. F(theta_min(), theta_max()) == 1 exactly.
  double theta_min() const { return bin_lower(first_bin_); }
  double theta_max() const { return bin_lower(first_bin_ + static_cast<std::int64_t>(probs_.size())); }

  // Mass of the bins lying entirely at or below t, i.e. bins whose upper
  // edge is <= t.
  double cdf(double t) const { return static_cast<double>(cumulative_count(t)) / static_cast<double>(n_samples_); }

  std::size_t cumulative_count(double t) const {
    if (t >= theta_max()) return n_samples_;
    const std::int64_t full = bin_index(t) - first_bin_;  // bins strictly below the one containing t
    // t exactly on an edge: floor puts it in the bin starting there, so every
    // bin below is complete.
    if (full <= 0) return 0;
    if (full >= static_cast<std::int64_t>(counts_.size())) return n_samples_;
    return cumulative_[static_cast<std::size_t>(full)];
  }

 private:
  double bin_origin_;
  double bin_width_;
  std::size_t n_samples_;
  std::int64_t first_bin_ = 0;
  std::vector<std::size_t> counts_;
  std::vector<double> probs_;
  std::vector<std::size_t> cumulative_;
};

inline TemperatureHistogram histogram(std::span<const double> samples, double bin_origin = 0.0, double bin_width = 1.0) {
  return TemperatureHistogram(samples, bin_origin, bin_width);
}

// F(theta, theta'] = CDF(theta') - CDF(theta).
inline double interval_probability(const TemperatureHistogram& h, double theta, double theta_prime) {
  require(!(theta > theta_prime), "interval_probability requires theta <= theta_prime");
  return h.cdf(theta_prime) - h.cdf(theta);
}

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;

inline double gaussian_kernel(double u) { return kInvSqrt2Pi * std::exp(-0.5 * u * u); }

// exp(-u*u/2) underflows to 0 beyond |u| ~ 38.6.
inline constexpr double kKernelReach = 40.0;

class KdeEstimator {
 public:
  // Samples are kept sorted, so every evaluation sums in the same order and
  // the estimate is exactly invariant under sample permutation.
  KdeEstimator(std::vector<double> samples, double bandwidth) : samples_(std::move(samples)), bandwidth_(bandwidth) {
    require(!samples_.empty(), "KDE needs at least one sample");
    require(bandwidth_ > 0.0 && std::isfinite(bandwidth_), "KDE bandwidth must be > 0");
    for (double x : samples_) require(std::isfinite(x), "KDE sample is not finite");
    std::sort(samples_.begin(), samples_.end());
  }

  const std::vector<double>& samples() const { return samples_; }
  double bandwidth() const { return bandwidth_; }

  // k = sum_i K((x - x_i) / w). Terms with |u| > 40 are exactly zero in
  // double precision and are skipped.
  double kernel_sum(double x) const {
    const double reach = kKernelReach * bandwidth_;
    auto first = std::lower_bound(samples_.begin(), samples_.end(), x - reach);
    auto last = std::upper_bound(first, samples_.end(), x + reach);
    double k = 0.0;
    for (auto it = first; it != last; ++it) k += gaussian_kernel((x - *it) / bandwidth_);
    return k;
  }

  // f(x) = k / (N w)
  double operator()(double x) const {
    return kernel_sum(x) / (static_cast<double>(samples_.size()) * bandwidth_);
  }

 private:
  std::vector<double> samples_;
  double bandwidth_;
};

inline double kde_at(const KdeEstimator& est, double x) { return est(x); }

inline constexpr double kMinBandwidth = 1e-6;

namespace detail {

// Linear-interpolation quantile of sorted data (the "type 7" rule).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

// w = 1.06 * min(sigma, IQR / 1.34) * N^(-1/5), floored at kMinBandwidth.
inline double silverman_bandwidth(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) return kMinBandwidth;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());

  double mean = 0.0;
  for (double x : sorted) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : sorted) ss += (x - mean) * (x - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(n - 1));
  const double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);

  const double spread = std::min(sigma, iqr / 1.34);
  const double w = 1.06 * spread * std::pow(static_cast<double>(n), -0.2);
  return std::max(w, kMinBandwidth);
}

struct FeatureGrid {
  double t_lo = -20.0;
  double t_hi = 120.0;
  int n_points = 128;

  double step() const { return (t_hi - t_lo) / static_cast<double>(n_points - 1); }
  double at(int g) const { return t_lo + static_cast<double>(g) * step(); }

  void validate() const {
    require(std::isfinite(t_lo) && std::isfinite(t_hi) && t_lo < t_hi, "feature grid requires t_lo < t_hi");
    require(n_points >= 2, "feature grid requires at least 2 points");
  }

  bool operator==(const FeatureGrid&) const = default;
};

// A KDE sampled on a FeatureGrid and rescaled so that sum(values) * step == 1.
struct PdfFeature {
  FeatureGrid grid;
  std::vector<double> values;
  double bandwidth = 0.0;
  double norm_mass = 0.0;      // sum(values) * step after rescaling
  double captured_mass = 0.0;  // same sum before rescaling
};

// std::nullopt selects Silverman's rule.
using BandwidthPolicy = std::optional<double>;

inline PdfFeature feature_vector(std::span<const double> samples, const FeatureGrid& grid, BandwidthPolicy bandwidth = {}) {
  require(!samples.empty(), "feature_vector needs at least one sample");
  grid.validate();
  const double w = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  const KdeEstimator est(std::vector<double>(samples.begin(), samples.end()), w);

  PdfFeature f;
  f.grid = grid;
  f.bandwidth = w;
  f.values.resize(static_cast<std::size_t>(grid.n_points));
  const double step = grid.step();
  double sum = 0.0;
  for (int g = 0; g < grid.n_points; ++g) {
    f.values[static_cast<std::size_t>(g)] = est(grid.at(g));
    sum += f.values[static_cast<std::size_t>(g)];
  }
  f.captured_mass = sum * step;
  if (!(f.captured_mass > 0.0) || !std::isfinite(f.captured_mass))
    throw ValidationError("density vanishes on the feature grid (bandwidth " + std::to_string(w) +
                          " vs grid step " + std::to_string(step) + ", or samples outside the grid)");
  double renorm = 0.0;
  for (auto& v : f.values) {
    v /= f.captured_mass;
    renorm += v;
  }
  f.norm_mass = renorm * step;
  return f;
}

inline nlohmann::json to_json(const PdfFeature& f) {
  return {{"t_lo", f.grid.t_lo}, {"t_hi", f.grid.t_hi}, {"n_points", f.grid.n_points}, {"values", f.values}, {"bandwidth", f.bandwidth}};
}

inline PdfFeature pdf_feature_from_json(const nlohmann::json& j) {
  PdfFeature f;
  try {
    f.grid = {j.at("t_lo").get<double>(), j.at("t_hi").get<double>(), j.at("n_points").get<int>()};
    f.values = j.at("values").get<std::vector<double>>();
    f.bandwidth = j.at("bandwidth").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed feature record: ") + e.what());
  }
  f.grid.validate();
  require(f.values.size() == static_cast<std::size_t>(f.grid.n_points), "feature has " + std::to_string(f.values.size()) +
                                                                            " values but n_points = " + std::to_string(f.grid.n_points));
  double sum = 0.0;
  for (double v : f.values) {
    require(std::isfinite(v) && v >= 0.0, "feature values must be finite and non-negative");
    sum += v;
  }
  f.norm_mass = sum * f.grid.step();
  f.captured_mass = f.norm_mass;
  return f;
}

}  // namespace thermoproto
