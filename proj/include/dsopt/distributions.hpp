#pragma once

#include "dsopt/core.hpp"
#include "dsopt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace dsopt {

struct TruncatedRayleigh {
  double scale = 1.0;
  double lo = 0.0;
  double hi = 3.0;
  bool operator==(const TruncatedRayleigh&) const = default;
};

struct Weibull {
  double scale = 1.0;
  double shape = 1.0;
  bool operator==(const Weibull&) const = default;
};

struct Empirical {
  std::vector<double> samples;  // sorted
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Empirical&) const = default;
};

using Pdf = std::variant<TruncatedRayleigh, Weibull, Empirical>;

inline Empirical make_empirical(std::vector<double> samples) {
  require(!samples.empty(), "empirical pdf: no samples");
  std::sort(samples.begin(), samples.end());
  Empirical e;
  e.lo = samples.front();
  e.hi = samples.back();
  e.samples = std::move(samples);
  return e;
}

inline Empirical point_mass(double at) { return make_empirical({at}); }

inline void validate(const Pdf& pdf) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TruncatedRayleigh>) {
          require(p.scale > 0.0, "truncated rayleigh: scale must be positive");
          require(p.lo >= 0.0 && p.lo < p.hi, "truncated rayleigh: support must satisfy 0 <= lo < hi");
        } else if constexpr (std::is_same_v<T, Weibull>) {
          require(p.scale > 0.0 && p.shape > 0.0, "weibull: scale and shape must be positive");
        } else {
          require(!p.samples.empty(), "empirical pdf: no samples");
          require(std::is_sorted(p.samples.begin(), p.samples.end()), "empirical pdf: samples not sorted");
          require(p.lo <= p.samples.front() && p.samples.back() <= p.hi, "empirical pdf: samples outside support");
        }
      },
      pdf);
}

namespace detail {

// exp(-x^2 / (2 sigma^2))
inline double rayleigh_tail(double x, double s) { return std::exp(-x * x / (2.0 * s * s)); }

inline double rayleigh_mass(const TruncatedRayleigh& p) {
  return rayleigh_tail(p.lo, p.scale) * -std::expm1(-(p.hi * p.hi - p.lo * p.lo) / (2.0 * p.scale * p.scale));
}

inline std::size_t histogram_bins(const Empirical& e) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(e.samples.size()))));
}

}  // namespace detail

inline double quantile(const Pdf& pdf, double u) {
  return std::visit(
      [u](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TruncatedRayleigh>) {
          const double q = -std::expm1(-(p.hi * p.hi - p.lo * p.lo) / (2.0 * p.scale * p.scale));
          const double x2 = p.lo * p.lo - 2.0 * p.scale * p.scale * std::log1p(-u * q);
          return std::clamp(std::sqrt(x2), p.lo, p.hi);
        } else if constexpr (std::is_same_v<T, Weibull>) {
          return p.scale * std::pow(-std::log1p(-u), 1.0 / p.shape);
        } else {
          const std::size_t n = p.samples.size();
          const auto idx = std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
          return p.samples[idx];
        }
      },
      pdf);
}

inline double sample_one(const Pdf& pdf, Rng& rng) { return quantile(pdf, uniform01(rng)); }

inline void sample_into(const Pdf& pdf, Rng& rng, std::vector<double>& out, std::size_t count) {
  out.resize(count);
  if (const auto* r = std::get_if<TruncatedRayleigh>(&pdf)) {
    const double q = -std::expm1(-(r->hi * r->hi - r->lo * r->lo) / (2.0 * r->scale * r->scale));
    const double lo2 = r->lo * r->lo;
    const double two_s2 = 2.0 * r->scale * r->scale;
    for (auto& x : out) x = std::clamp(std::sqrt(lo2 - two_s2 * std::log1p(-uniform01(rng) * q)), r->lo, r->hi);
    return;
  }
  for (auto& x : out) x = sample_one(pdf, rng);
}

inline std::vector<double> sample(const Pdf& pdf, Rng& rng, std::size_t count) {
  std::vector<double> out;
  sample_into(pdf, rng, out, count);
  return out;
}

inline double density(const Pdf& pdf, double x) {
  return std::visit(
      [x](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TruncatedRayleigh>) {
          if (x < p.lo || x > p.hi) return 0.0;
          return x / (p.scale * p.scale) * detail::rayleigh_tail(x, p.scale) / detail::rayleigh_mass(p);
        } else if constexpr (std::is_same_v<T, Weibull>) {
          if (x < 0.0) return 0.0;
          const double t = x / p.scale;
          return p.shape / p.scale * std::pow(t, p.shape - 1.0) * std::exp(-std::pow(t, p.shape));
        } else {
          if (x < p.lo || x > p.hi) return 0.0;
          if (p.hi == p.lo) return std::numeric_limits<double>::infinity();
          const std::size_t bins = detail::histogram_bins(p);
          const double width = (p.hi - p.lo) / static_cast<double>(bins);
          const auto bin = std::min(bins - 1, static_cast<std::size_t>((x - p.lo) / width));
          const double left = p.lo + static_cast<double>(bin) * width;
          const double right = bin + 1 == bins ? p.hi : left + width;
          const auto first = std::lower_bound(p.samples.begin(), p.samples.end(), left);
          const auto last = bin + 1 == bins ? p.samples.end() : std::lower_bound(p.samples.begin(), p.samples.end(), right);
          return static_cast<double>(last - first) / (static_cast<double>(p.samples.size()) * width);
        }
      },
      pdf);
}

inline double cdf(const Pdf& pdf, double x) {
  return std::visit(
      [x](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TruncatedRayleigh>) {
          if (x <= p.lo) return 0.0;
          if (x >= p.hi) return 1.0;
          const double q = -std::expm1(-(x * x - p.lo * p.lo) / (2.0 * p.scale * p.scale));
          const double qt = -std::expm1(-(p.hi * p.hi - p.lo * p.lo) / (2.0 * p.scale * p.scale));
          return q / qt;
        } else if constexpr (std::is_same_v<T, Weibull>) {
          return x <= 0.0 ? 0.0 : -std::expm1(-std::pow(x / p.scale, p.shape));
        } else {
          const auto it = std::upper_bound(p.samples.begin(), p.samples.end(), x);
          return static_cast<double>(it - p.samples.begin()) / static_cast<double>(p.samples.size());
        }
      },
      pdf);
}

inline double mean(const Pdf& pdf) {
  return std::visit(
      [](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TruncatedRayleigh>) {
          const double s = p.scale;
          const double ea = detail::rayleigh_tail(p.lo, s), eb = detail::rayleigh_tail(p.hi, s);
          const double c = s * std::sqrt(std::numbers::pi / 2.0);
          const double r2 = s * std::numbers::sqrt2;
          return (p.lo * ea - p.hi * eb + c * (std::erf(p.hi / r2) - std::erf(p.lo / r2))) / detail::rayleigh_mass(p);
        } else if constexpr (std::is_same_v<T, Weibull>) {
          return p.scale * std::tgamma(1.0 + 1.0 / p.shape);
        } else {
          double s = 0.0;
          for (double x : p.samples) s += x;
          return s / static_cast<double>(p.samples.size());
        }
      },
      pdf);
}

inline double second_moment(const Pdf& pdf) {
  return std::visit(
      [](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TruncatedRayleigh>) {
          const double s = p.scale;
          const double ea = detail::rayleigh_tail(p.lo, s), eb = detail::rayleigh_tail(p.hi, s);
          return (p.lo * p.lo * ea - p.hi * p.hi * eb) / detail::rayleigh_mass(p) + 2.0 * s * s;
        } else if constexpr (std::is_same_v<T, Weibull>) {
          return p.scale * p.scale * std::tgamma(1.0 + 2.0 / p.shape);
        } else {
          double s = 0.0;
          for (double x : p.samples) s += x * x;
          return s / static_cast<double>(p.samples.size());
        }
      },
      pdf);
}

// Compact interval on which densities and utility integrals are evaluated.
// Weibull tails beyond the 0.9999 quantile are dropped.
inline std::pair<double, double> evaluation_interval(const Pdf& pdf) {
  return std::visit(
      [&pdf](const auto& p) -> std::pair<double, double> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Weibull>) {
          return {0.0, quantile(pdf, 0.9999)};
        } else {
          return {p.lo, p.hi};
        }
      },
      pdf);
}

inline std::pair<double, double> evaluation_interval(const Pdf& p, const Pdf& q) {
  const auto [a0, a1] = evaluation_interval(p);
  const auto [b0, b1] = evaluation_interval(q);
  return {std::min(a0, b0), std::max(a1, b1)};
}

inline constexpr int kSupGridPoints = 4096;

struct DensityGrid {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> values;
};

inline DensityGrid density_grid(const Pdf& pdf, double lo, double hi, int points = kSupGridPoints) {
  DensityGrid g{lo, hi, std::vector<double>(static_cast<std::size_t>(points))};
  const double h = (hi - lo) / (points - 1);
  for (int k = 0; k < points; ++k) g.values[static_cast<std::size_t>(k)] = density(pdf, lo + k * h);
  return g;
}

// sup |p - q| from two grids on the same interval, refined by golden-section search
// around the best grid point.
inline double sup_density_diff(const Pdf& p, const Pdf& q, const DensityGrid& gp, const DensityGrid& gq) {
  require(gp.lo == gq.lo && gp.hi == gq.hi && gp.values.size() == gq.values.size(),
          "sup_density_diff: grids do not share an interval");
  const std::size_t m = gp.values.size();
  std::size_t best = 0;
  double best_val = -1.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double diff = std::abs(gp.values[k] - gq.values[k]);
    if (diff > best_val) {
      best_val = diff;
      best = k;
    }
  }
  if (best_val == 0.0 && p == q) return 0.0;
  const double h = (gp.hi - gp.lo) / static_cast<double>(m - 1);
  const double a = gp.lo + static_cast<double>(best == 0 ? 0 : best - 1) * h;
  const double b = gp.lo + static_cast<double>(std::min(m - 1, best + 1)) * h;
  const double refined = golden_max([&](double x) { return std::abs(density(p, x) - density(q, x)); }, a, b);
  return std::max(best_val, refined);
}

inline double sup_density_diff(const Pdf& p, const Pdf& q) {
  if (p == q) return 0.0;
  const auto [lo, hi] = evaluation_interval(p, q);
  return sup_density_diff(p, q, density_grid(p, lo, hi), density_grid(q, lo, hi));
}

// A pdf together with a version tag and cached moments; shared between the
// scenario (current pdf) and the nodes that hold it as stale knowledge.
struct PdfRecord {
  Pdf pdf;
  std::uint64_t version = 0;
  double mean = 0.0;
  double second_moment = 0.0;

  // Grid on the pdf's own evaluation interval, built on first use.
  const DensityGrid& grid() const {
    if (!grid_) {
      const auto [lo, hi] = evaluation_interval(pdf);
      grid_ = std::make_shared<DensityGrid>(density_grid(pdf, lo, hi));
    }
    return *grid_;
  }

 private:
  mutable std::shared_ptr<DensityGrid> grid_;
};

using PdfHandle = std::shared_ptr<const PdfRecord>;

inline PdfHandle make_pdf_handle(Pdf pdf, std::uint64_t version) {
  validate(pdf);
  auto rec = std::make_shared<PdfRecord>();
  rec->mean = mean(pdf);
  rec->second_moment = second_moment(pdf);
  rec->pdf = std::move(pdf);
  rec->version = version;
  return rec;
}

inline double sup_density_diff(const PdfRecord& p, const PdfRecord& q) {
  if (p.version == q.version || p.pdf == q.pdf) return 0.0;
  const auto ip = evaluation_interval(p.pdf);
  const auto iq = evaluation_interval(q.pdf);
  if (ip == iq) return sup_density_diff(p.pdf, q.pdf, p.grid(), q.grid());
  return sup_density_diff(p.pdf, q.pdf);
}

struct RayleighEvolution {
  double rho = 0.0;
  double a = 0.0;
  double b = 0.0;
  double innovation_var = 0.0;
  double clamp_lo = 1e-3;
  double clamp_hi = 3.0;
};

inline double evolve_rayleigh(double scale, const RayleighEvolution& law, long k, Rng& rng) {
  require(law.innovation_var >= 0.0 && law.clamp_lo < law.clamp_hi, "rayleigh evolution: invalid law");
  double r = 0.0;
  if (law.innovation_var > 0.0) r = std::normal_distribution<double>(0.0, std::sqrt(law.innovation_var))(rng);
  return std::clamp(scale + law.rho * std::sin(law.a * static_cast<double>(k) + law.b) + r, law.clamp_lo,
                    law.clamp_hi);
}

// Slowly varying Weibull parameters: each is base * (1 + cos(rate*k + phase)/1.3) + offset,
// with the scale multiplied by gust_factor inside [gust_begin, gust_end].
struct WeibullEvolution {
  double base_scale = 1.0;
  double base_shape = 1.0;
  double phase_scale = 0.0;
  double phase_shape = 0.0;
  double rate = 0.0;
  double offset = 0.0;
  long gust_begin = 1;
  long gust_end = 0;
  double gust_factor = 2.0;
};

inline std::pair<double, double> evolve_weibull(const WeibullEvolution& law, long k) {
  const double t = law.rate * static_cast<double>(k);
  double scale = law.base_scale * (1.0 + std::cos(t + law.phase_scale) / 1.3) + law.offset;
  const double shape = law.base_shape * (1.0 + std::cos(t + law.phase_shape) / 1.3) + law.offset;
  if (k >= law.gust_begin && k <= law.gust_end) scale *= law.gust_factor;
  require(std::isfinite(scale) && std::isfinite(shape) && scale > 0.0 && shape > 0.0,
          "weibull evolution: parameters left the positive range");
  return {scale, shape};
}

}  // namespace dsopt
