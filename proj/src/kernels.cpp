#include "horus/kernels.hpp"

#include "horus/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace horus::kernels {

namespace {

void check_stack(const Matrix& values, const Matrix& masks) {
  if (values.rows() != masks.rows() || values.cols() != masks.cols())
    throw InvalidInput("kernels: values and masks differ in shape");
}

// Per-entry bodies shared by both variants.

double weighted_entry(const Matrix& values, const Matrix& masks, const Vector& weights,
                      double fallback, double eps, Eigen::Index i) {
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    const double wm = weights(c) * masks(i, c);
    num += wm * values(i, c);
    den += wm;
  }
  return den > eps ? num / den : fallback;
}

void covering(const Matrix& values, const Matrix& masks, Eigen::Index i, std::vector<double>& buf) {
  buf.clear();
  for (Eigen::Index c = 0; c < values.cols(); ++c)
    if (masks(i, c) != 0.0) buf.push_back(values(i, c));
  std::sort(buf.begin(), buf.end());
}

double median_entry(std::vector<double>& buf, double fallback) {
  const std::size_t k = buf.size();
  if (k == 0) return fallback;
  return k % 2 == 1 ? buf[k / 2] : 0.5 * (buf[k / 2 - 1] + buf[k / 2]);
}

double trimmed_entry(std::vector<double>& buf, double beta, double fallback) {
  const std::size_t k = buf.size();
  if (k == 0) return fallback;
  auto trim = static_cast<std::size_t>(std::floor(beta * static_cast<double>(k) + 1e-9));
  if (2 * trim >= k) trim = (k - 1) / 2;
  double sum = 0.0;
  for (std::size_t j = trim; j < k - trim; ++j) sum += buf[j];
  return sum / static_cast<double>(k - 2 * trim);
}

double pair_distance(const Matrix& values, const Matrix& masks, Eigen::Index a, Eigen::Index b) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (masks(i, a) != 0.0 && masks(i, b) != 0.0) {
      const double diff = values(i, a) - values(i, b);
      d += diff * diff;
    }
  }
  return d;
}

void check_weighted(const Matrix& values, const Matrix& masks, const Vector& weights, const Vector& fallback) {
  check_stack(values, masks);
  if (weights.size() != values.cols()) throw InvalidInput("weighted_masked_mean: one weight per client");
  if (fallback.size() != values.rows()) throw InvalidInput("kernels: fallback length mismatch");
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

Vector weighted_masked_mean(const Matrix& values, const Matrix& masks, const Vector& weights,
                            const Vector& fallback, double eps) {
  check_weighted(values, masks, weights, fallback);
  Vector out(values.rows());
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    out(i) = weighted_entry(values, masks, weights, fallback(i), eps, i);
  return out;
}

Vector coordinate_median(const Matrix& values, const Matrix& masks, const Vector& fallback) {
  check_stack(values, masks);
  Vector out(values.rows());
  std::vector<double> buf;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    covering(values, masks, i, buf);
    out(i) = median_entry(buf, fallback(i));
  }
  return out;
}

Vector coordinate_trimmed_mean(const Matrix& values, const Matrix& masks, double beta, const Vector& fallback) {
  check_stack(values, masks);
  Vector out(values.rows());
  std::vector<double> buf;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    covering(values, masks, i, buf);
    out(i) = trimmed_entry(buf, beta, fallback(i));
  }
  return out;
}

Matrix pairwise_sq_distances(const Matrix& values, const Matrix& masks) {
  check_stack(values, masks);
  const Eigen::Index n = values.cols();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b) d(a, b) = d(b, a) = pair_distance(values, masks, a, b);
  return d;
}

}  // namespace serial

namespace parallel {

Vector weighted_masked_mean(const Matrix& values, const Matrix& masks, const Vector& weights,
                            const Vector& fallback, double eps) {
  check_weighted(values, masks, weights, fallback);
  const Eigen::Index rows = values.rows();
  Vector out(rows);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < rows; ++i)
    out(i) = weighted_entry(values, masks, weights, fallback(i), eps, i);
  return out;
}

Vector coordinate_median(const Matrix& values, const Matrix& masks, const Vector& fallback) {
  check_stack(values, masks);
  const Eigen::Index rows = values.rows();
  Vector out(rows);
#pragma omp parallel
  {
    std::vector<double> buf;
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < rows; ++i) {
      covering(values, masks, i, buf);
      out(i) = median_entry(buf, fallback(i));
    }
  }
  return out;
}

Vector coordinate_trimmed_mean(const Matrix& values, const Matrix& masks, double beta, const Vector& fallback) {
  check_stack(values, masks);
  const Eigen::Index rows = values.rows();
  Vector out(rows);
#pragma omp parallel
  {
    std::vector<double> buf;
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < rows; ++i) {
      covering(values, masks, i, buf);
      out(i) = trimmed_entry(buf, beta, fallback(i));
    }
  }
  return out;
}

Matrix pairwise_sq_distances(const Matrix& values, const Matrix& masks) {
  check_stack(values, masks);
  const Eigen::Index n = values.cols();
  Matrix d = Matrix::Zero(n, n);
  const Eigen::Index pairs = n * n;
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index p = 0; p < pairs; ++p) {
    const Eigen::Index a = p / n;
    const Eigen::Index b = p % n;
    if (a < b) d(a, b) = pair_distance(values, masks, a, b);
  }
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < a; ++b) d(a, b) = d(b, a);
  return d;
}

}  // namespace parallel

}  // namespace horus::kernels
