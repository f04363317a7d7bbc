#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rnav/random.hpp"
#include "rnav/raster.hpp"

namespace rnav {

/// Sensed absolute depth with a per-pixel validity mask.
struct DepthFrame {
  DepthRaster values;  // meters; invalid pixels may hold NaN/inf
  MaskRaster mask;
  double timestamp = 0.0;
};

/// Monotone-in-depth raster from a relative-depth source (dimensionless).
struct RelativeDepthFrame {
  DepthRaster values;
};

/// Polynomial mapping relative depth to meters, highest degree first.
struct AlignmentPoly {
  int order = 1;
  std::array<double, 4> coeffs{};  // coeffs[0..order], highest degree first
  // Relative-depth range observed while fitting; evaluations outside it are
  // counted as extrapolations.
  double rel_lo = -std::numeric_limits<double>::infinity();
  double rel_hi = std::numeric_limits<double>::infinity();

  static AlignmentPoly passthrough() {
    AlignmentPoly p;
    p.order = 2;
    p.coeffs = {0.0, 1.0, 0.0, 0.0};  // a=0, b=1, c=0
    return p;
  }

  double eval(double rel) const {
    double acc = 0.0;
    for (int k = 0; k <= order; ++k) {
      acc = acc * rel + coeffs[static_cast<std::size_t>(k)];
    }
    return acc;
  }
};

/// Completed depth raster, defined on every pixel.
struct CompletedDepth {
  DepthRaster values;
  // Pixels whose relative depth fell outside the fitted range; such values
  // are still used (they are the range-extension case) but observable here.
  int extrapolated_count = 0;
};

struct DepthClamp {
  double z_min = 0.1;
  double z_max = 30.0;
};

/// Pixel valid iff finite and z_min <= value <= z_max.
inline MaskRaster valid_mask(const DepthRaster& raw, double z_min, double z_max) {
  MaskRaster mask(raw.width(), raw.height(), kMaskInvalid);
  const float* src = raw.data();
  std::uint8_t* dst = mask.data();
  for (std::size_t n = 0; n < raw.size(); ++n) {
    const float v = src[n];
    if (std::isfinite(v) && v >= z_min && v <= z_max) dst[n] = kMaskValid;
  }
  return mask;
}

/// Least-squares diagnostics: residual spread on the fitted pixels and the
/// predictive uncertainty of the polynomial at a given relative depth. Used
/// to reject fits whose extrapolation would be statistically meaningless.
struct FitQuality {
  double sigma = 0.0;              // residual std on the fit pixels (m)
  double scale = 1.0;              // x column scaling used by the fit
  int order = 1;
  Eigen::MatrixXd normal_inverse;  // (X'X)^-1 in scaled coordinates

  double std_at(double rel) const {
    Eigen::VectorXd row(order + 1);
    const double xs = rel / scale;
    double p = 1.0;
    for (int k = order; k >= 0; --k) {
      row(k) = p;
      p *= xs;
    }
    const double var = row.dot(normal_inverse * row);
    return sigma * std::sqrt(std::max(var, 0.0));
  }
};

/// Least-squares polynomial fit of y over x on (x, y) pairs.
/// Normal equations on the scaled Vandermonde system; fine at order <= 3.
inline std::optional<AlignmentPoly> fit_polynomial(
    std::span<const std::pair<double, double>> points, int order,
    FitQuality* quality = nullptr) {
  if (order < 1 || order > 3) return std::nullopt;
  const int ncoef = order + 1;
  if (static_cast<int>(points.size()) < ncoef) return std::nullopt;

  // Degenerate when there are fewer distinct x values than coefficients.
  {
    std::vector<double> xs;
    xs.reserve(points.size());
    for (const auto& [x, y] : points) xs.push_back(x);
    std::sort(xs.begin(), xs.end());
    int distinct = 1;
    for (std::size_t n = 1; n < xs.size(); ++n) {
      if (xs[n] > xs[n - 1] + 1e-12) ++distinct;
    }
    if (distinct < ncoef) return std::nullopt;
  }

  double xmax = 0.0;
  for (const auto& [x, y] : points) xmax = std::max(xmax, std::abs(x));
  const double scale = xmax > 0.0 ? xmax : 1.0;

  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(ncoef, ncoef);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(ncoef);
  Eigen::VectorXd row(ncoef);
  for (const auto& [x, y] : points) {
    const double xs = x / scale;
    double p = 1.0;
    for (int k = ncoef - 1; k >= 0; --k) {  // highest degree first
      row(k) = p;
      p *= xs;
    }
    ata.noalias() += row * row.transpose();
    atb.noalias() += row * y;
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  Eigen::VectorXd c = ldlt.solve(atb);
  if (!c.allFinite()) return std::nullopt;

  AlignmentPoly poly;
  poly.order = order;
  double s = 1.0;
  for (int k = order; k >= 0; --k) {  // undo the x scaling
    poly.coeffs[static_cast<std::size_t>(k)] = c(k) / s;
    s *= scale;
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& [x, y] : points) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  poly.rel_lo = lo;
  poly.rel_hi = hi;

  if (quality) {
    double sse = 0.0;
    for (const auto& [x, y] : points) {
      const double r = y - poly.eval(x);
      sse += r * r;
    }
    const auto dof = static_cast<double>(points.size()) - ncoef;
    quality->sigma = dof > 0.0 ? std::sqrt(sse / dof) : 0.0;
    quality->scale = scale;
    quality->order = order;
    quality->normal_inverse =
        ldlt.solve(Eigen::MatrixXd::Identity(ncoef, ncoef));
  }
  return poly;
}

constexpr int kFitSubsampleLimit = 20000;

/// Gathers masked (rel, abs) pairs, stride-subsampled above the limit.
inline std::vector<std::pair<double, double>> alignment_pairs(
    const DepthFrame& abs, const RelativeDepthFrame& rel) {
  std::vector<std::pair<double, double>> pts;
  const std::uint8_t* m = abs.mask.data();
  std::size_t valid = 0;
  for (std::size_t n = 0; n < abs.mask.size(); ++n) {
    if (mask_valid(m[n])) ++valid;
  }
  const std::size_t stride = valid > kFitSubsampleLimit
                                 ? (valid + kFitSubsampleLimit - 1) / kFitSubsampleLimit
                                 : 1;
  pts.reserve(std::min<std::size_t>(valid, kFitSubsampleLimit));
  std::size_t seen = 0;
  const float* av = abs.values.data();
  const float* rv = rel.values.data();
  for (std::size_t n = 0; n < abs.mask.size(); ++n) {
    if (!mask_valid(m[n])) continue;
    if (seen++ % stride == 0) pts.emplace_back(rv[n], av[n]);
  }
  return pts;
}

/// Fit of sensed depth as a polynomial in relative depth over valid pixels.
/// Returns nullopt on insufficient or degenerate data; the caller keeps the
/// previous polynomial in that case.
inline std::optional<AlignmentPoly> fit_alignment(const DepthFrame& abs,
                                                  const RelativeDepthFrame& rel,
                                                  int order,
                                                  FitQuality* quality = nullptr) {
  if (!abs.values.same_shape(rel.values) || !abs.values.same_shape(abs.mask)) {
    return std::nullopt;
  }
  const auto pts = alignment_pairs(abs, rel);
  return fit_polynomial(pts, order, quality);
}

/// Evaluates the alignment polynomial on every pixel, clamped to the depth
/// range. Defined on all pixels, including ones invalid in the sensed mask.
inline CompletedDepth complete(const RelativeDepthFrame& rel,
                               const AlignmentPoly& poly,
                               const DepthClamp& clamp = {}) {
  CompletedDepth out;
  out.values = DepthRaster(rel.values.width(), rel.values.height());
  const float* src = rel.values.data();
  float* dst = out.values.data();
  for (std::size_t n = 0; n < rel.values.size(); ++n) {
    const double r = src[n];
    if (r < poly.rel_lo || r > poly.rel_hi) ++out.extrapolated_count;
    const double z = std::clamp(poly.eval(r), clamp.z_min, clamp.z_max);
    dst[n] = static_cast<float>(z);
  }
  return out;
}

struct DepthMetrics {
  double rmse = 0.0;
  double abs_rel = 0.0;
};

/// RMSE and AbsRel over masked pixels; nullopt when the mask is empty.
inline std::optional<DepthMetrics> depth_metrics(const DepthRaster& pred,
                                                 const DepthRaster& truth,
                                                 const MaskRaster& mask) {
  if (!pred.same_shape(truth) || !pred.same_shape(mask)) return std::nullopt;
  const float* p = pred.data();
  const float* t = truth.data();
  const std::uint8_t* m = mask.data();
  double se = 0.0, ar = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    if (!mask_valid(m[n])) continue;
    const double d = static_cast<double>(p[n]) - static_cast<double>(t[n]);
    se += d * d;
    ar += std::abs(d) / static_cast<double>(t[n]);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return DepthMetrics{std::sqrt(se / count), ar / count};
}

/// Monotone maps from true depth to relative depth, standing in for a
/// monocular estimation network. All variants are deterministic per seed.
struct SyntheticDistortion {
  enum class Kind { identity, affine, quadratic_inverse, logistic };
  Kind kind = Kind::identity;
  // affine: rel = affine_scale * d + affine_offset
  double affine_scale = 0.1;
  double affine_offset = 0.2;
  // quadratic_inverse: rel solves d = qa*rel^2 + qb*rel + qc  (qa, qb > 0)
  double qa = 2.0;
  double qb = 3.0;
  double qc = 1.0;
  // logistic: rel = 1 / (1 + exp(-(d - logistic_center) / logistic_scale))
  double logistic_center = 0.0;
  double logistic_scale = 1.0;
  double noise_sigma = 0.0;
  // Depths beyond this (and non-finite ones) saturate, like a real network.
  double saturation_depth = 50.0;

  double apply(double d) const {
    if (!std::isfinite(d) || d > saturation_depth) d = saturation_depth;
    switch (kind) {
      case Kind::identity:
        return d;
      case Kind::affine:
        return affine_scale * d + affine_offset;
      case Kind::quadratic_inverse: {
        const double disc = qb * qb - 4.0 * qa * (qc - d);
        return (-qb + std::sqrt(std::max(disc, 0.0))) / (2.0 * qa);
      }
      case Kind::logistic:
        return 1.0 / (1.0 + std::exp(-(d - logistic_center) / logistic_scale));
    }
    return d;
  }
};

inline RelativeDepthFrame synthetic_relative_depth(const DepthRaster& truth,
                                                   const SyntheticDistortion& distortion,
                                                   std::uint64_t seed) {
  RelativeDepthFrame rel;
  rel.values = DepthRaster(truth.width(), truth.height());
  auto rng = make_rng(seed, 0x7e1a71fe);
  std::normal_distribution<double> noise(0.0, 1.0);
  const float* src = truth.data();
  float* dst = rel.values.data();
  for (std::size_t n = 0; n < truth.size(); ++n) {
    double r = distortion.apply(src[n]);
    if (distortion.noise_sigma > 0.0) r += distortion.noise_sigma * noise(rng);
    dst[n] = static_cast<float>(r);
  }
  return rel;
}

/// Pluggable relative-depth source consumed by the simulation loop.
class RelativeDepthProvider {
public:
  virtual ~RelativeDepthProvider() = default;
  virtual RelativeDepthFrame generate(const DepthRaster& true_depth,
                                      std::uint64_t seed) const = 0;
};

class SyntheticRelativeDepthProvider final : public RelativeDepthProvider {
public:
  explicit SyntheticRelativeDepthProvider(SyntheticDistortion distortion)
      : distortion_(distortion) {}

  RelativeDepthFrame generate(const DepthRaster& true_depth,
                              std::uint64_t seed) const override {
    return synthetic_relative_depth(true_depth, distortion_, seed);
  }

  const SyntheticDistortion& distortion() const { return distortion_; }

private:
  SyntheticDistortion distortion_;
};

}  // namespace rnav
