#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace horus {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Singular values of a matrix, sorted non-increasing. `nominal_rank` is min(rows, cols) of the
/// source matrix, so zero singular values are kept.
struct Spectrum {
  std::vector<double> singular_values;
  int nominal_rank = 0;

  double total() const;
};

struct ThinSvd {
  Matrix left;   // p x t, orthonormal columns
  Spectrum spectrum;
  Matrix right;  // q x t, orthonormal columns
};

/// Thin SVD, t = min(p, q). Throws InvalidInput on an empty or non-finite matrix.
ThinSvd thin_svd(const Matrix& m);

/// Singular values only (same ordering and length as thin_svd().spectrum).
Spectrum spectrum_of(const Matrix& m);

/// Shannon entropy (natural log) of the normalized singular values. 0 for an all-zero spectrum.
double spectral_entropy(const Spectrum& s);

/// Fraction of singular-value mass in the k largest values. k is clamped to nominal_rank; an
/// all-zero spectrum reports 1.
double topk_energy_ratio(const Spectrum& s, int k);

struct SingularDirection {
  Vector v;                // unit norm, largest-magnitude entry positive
  bool degenerate = false; // source matrix was zero; v is e_1
};

/// Right singular vector of the largest singular value.
SingularDirection first_right_singular_vector(const Matrix& m);

/// Linear-interpolation percentile on the ascending sort, rank = (n-1) p / 100.
double percentile(std::span<const double> values, double p);

/// Standard normal quantile. Acklam's rational approximation refined by one Halley step.
double inverse_normal_cdf(double q);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace horus
