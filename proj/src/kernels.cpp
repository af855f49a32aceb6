#include "revis/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace revis::kernels {

namespace {

// Shared per-output bodies: both namespaces call exactly these, so the
// parallel path only changes which thread computes an output.

double mean_difference_at(const HiddenStateDump& dump, std::size_t a, std::size_t b, std::size_t layer,
                          std::size_t j) {
  const std::size_t n = dump.metadata.num_samples;
  const auto inv_n = 1.0 / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += static_cast<double>(dump.state(i, a, layer)[j]) - static_cast<double>(dump.state(i, b, layer)[j]);
  }
  const double mean = sum * inv_n;
  double correction = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    correction +=
        (static_cast<double>(dump.state(i, a, layer)[j]) - static_cast<double>(dump.state(i, b, layer)[j])) - mean;
  }
  return mean + correction * inv_n;
}

double risk_at(std::span<const double> h, std::span<const double> v, double v_norm) {
  const double hn = norm(h);
  if (hn == 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double c = dot(h, v) / (hn * v_norm);
  return -std::clamp(c, -1.0, 1.0);
}

double matvec_row(std::span<const float> w, std::size_t r, std::size_t cols, std::span<const double> x) {
  const float* wr = w.data() + r * cols;
  double acc = 0.0;
  for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(wr[c]) * x[c];
  return acc;
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) noexcept {
  // Scaled accumulation keeps tiny and huge vectors finite.
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double acc = 0.0;
  for (double v : a) {
    const double s = v / scale;
    acc += s * s;
  }
  return scale * std::sqrt(acc);
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void mean_difference(const HiddenStateDump& dump, std::size_t cond_a, std::size_t cond_b, std::size_t layer,
                     std::span<double> out) {
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = mean_difference_at(dump, cond_a, cond_b, layer, j);
}

void risk_scores(const Matrix& states, std::span<const double> v, double v_norm, std::span<double> out) {
  for (std::size_t i = 0; i < states.rows; ++i) out[i] = risk_at(states.row(i), v, v_norm);
}

void matvec(std::span<const float> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = matvec_row(w, r, cols, x);
}

}  // namespace serial

namespace omp {

void mean_difference(const HiddenStateDump& dump, std::size_t cond_a, std::size_t cond_b, std::size_t layer,
                     std::span<double> out) {
  const auto d = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static) if (d * dump.metadata.num_samples > 4096)
  for (std::ptrdiff_t j = 0; j < d; ++j) {
    out[j] = mean_difference_at(dump, cond_a, cond_b, layer, static_cast<std::size_t>(j));
  }
}

void risk_scores(const Matrix& states, std::span<const double> v, double v_norm, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(states.rows);
#pragma omp parallel for schedule(static) if (states.rows * states.cols > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = risk_at(states.row(static_cast<std::size_t>(i)), v, v_norm);
  }
}

void matvec(std::span<const float> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > 16384)
  for (std::ptrdiff_t r = 0; r < n; ++r) y[r] = matvec_row(w, static_cast<std::size_t>(r), cols, x);
}

}  // namespace omp

}  // namespace revis::kernels
