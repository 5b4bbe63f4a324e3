#include "horus/spectral.hpp"

#include "horus/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace horus {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (m.size() == 0) throw InvalidInput(std::string(what) + ": empty matrix");
  if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entry");
}

Spectrum to_spectrum(const Vector& sv, int nominal_rank) {
  Spectrum s;
  s.nominal_rank = nominal_rank;
  s.singular_values.assign(sv.data(), sv.data() + sv.size());
  for (double& x : s.singular_values) x = std::max(x, 0.0);
  std::sort(s.singular_values.begin(), s.singular_values.end(), std::greater<>());
  return s;
}

}  // namespace

double Spectrum::total() const {
  return std::accumulate(singular_values.begin(), singular_values.end(), 0.0);
}

ThinSvd thin_svd(const Matrix& m) {
  require_finite(m, "thin_svd");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const int t = static_cast<int>(std::min(m.rows(), m.cols()));
  // JacobiSVD already returns values in decreasing order; the vectors line up with them.
  return ThinSvd{svd.matrixU(), to_spectrum(svd.singularValues(), t), svd.matrixV()};
}

Spectrum spectrum_of(const Matrix& m) {
  require_finite(m, "spectrum_of");
  Eigen::JacobiSVD<Matrix> svd(m);
  return to_spectrum(svd.singularValues(), static_cast<int>(std::min(m.rows(), m.cols())));
}

double spectral_entropy(const Spectrum& s) {
  const double total = s.total();
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double sigma : s.singular_values) {
    const double p = sigma / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double topk_energy_ratio(const Spectrum& s, int k) {
  if (k < 1) throw InvalidInput("topk_energy_ratio: k must be >= 1");
  const double total = s.total();
  if (total <= 0.0) return 1.0;
  const int kk = std::min<int>(k, static_cast<int>(s.singular_values.size()));
  const double head = std::accumulate(s.singular_values.begin(), s.singular_values.begin() + kk, 0.0);
  return std::clamp(head / total, 0.0, 1.0);
}

SingularDirection first_right_singular_vector(const Matrix& m) {
  require_finite(m, "first_right_singular_vector");
  SingularDirection out;
  if (m.cwiseAbs().maxCoeff() == 0.0) {
    out.v = Vector::Unit(m.cols(), 0);
    out.degenerate = true;
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinV);
  out.v = svd.matrixV().col(0);
  out.v.normalize();
  Eigen::Index idx = 0;
  out.v.cwiseAbs().maxCoeff(&idx);
  if (out.v(idx) < 0.0) out.v = -out.v;
  return out;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw InvalidInput("percentile: empty input");
  if (!(p >= 0.0 && p <= 100.0)) throw InvalidInput("percentile: p outside [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = static_cast<double>(sorted.size() - 1) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double inverse_normal_cdf(double q) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidInput("inverse_normal_cdf: q must lie in (0, 1)");
  // Work on the lower half so that q and 1-q give exactly negated results.
  if (q > 0.5) return -inverse_normal_cdf(1.0 - q);
  if (q == 0.5) return 0.0;

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double q_low = 0.02425;

  double x;
  if (q < q_low) {
    const double t = std::sqrt(-2.0 * std::log(q));
    x = (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) /
        ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1.0);
  } else {
    const double u = q - 0.5;
    const double r = u * u;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * u /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  // Halley refinement.
  const double e = normal_cdf(x) - q;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace horus
