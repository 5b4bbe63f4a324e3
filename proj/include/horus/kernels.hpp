#pragma once

// Data-parallel reductions over a stack of flattened client updates.
//
// Every kernel takes `values` and `masks` as (entries x clients) matrices: column c is client c,
// mask entries are 0/1. Each kernel exists twice with identical signatures: `serial` is the
// reference, `parallel` splits the entry (or pair) loop across OpenMP threads. Within one entry
// the reduction over clients always runs in column order, so both variants agree bit-for-bit.

#include "horus/spectral.hpp"

namespace horus::kernels {

namespace serial {

/// out_i = sum_c w_c m_ic v_ic / sum_c w_c m_ic, or fallback_i when the denominator <= eps.
Vector weighted_masked_mean(const Matrix& values, const Matrix& masks, const Vector& weights,
                            const Vector& fallback, double eps);
/// Per-entry median over covering clients; fallback where nobody covers the entry.
Vector coordinate_median(const Matrix& values, const Matrix& masks, const Vector& fallback);
/// Per-entry mean after dropping floor(beta * k) values from each tail of the k covering ones.
Vector coordinate_trimmed_mean(const Matrix& values, const Matrix& masks, double beta,
                               const Vector& fallback);
/// Squared Euclidean distance between every client pair over the entries both cover.
Matrix pairwise_sq_distances(const Matrix& values, const Matrix& masks);

}  // namespace serial

namespace parallel {

Vector weighted_masked_mean(const Matrix& values, const Matrix& masks, const Vector& weights,
                            const Vector& fallback, double eps);
Vector coordinate_median(const Matrix& values, const Matrix& masks, const Vector& fallback);
Vector coordinate_trimmed_mean(const Matrix& values, const Matrix& masks, double beta,
                               const Vector& fallback);
Matrix pairwise_sq_distances(const Matrix& values, const Matrix& masks);

}  // namespace parallel

/// Threads available to the parallel kernels (1 without OpenMP).
int max_threads();

}  // namespace horus::kernels
