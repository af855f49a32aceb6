#pragma once

// Data-parallel inner loops shared by the vector, calibration and toy-model
// code. `serial` holds the reference implementations; `omp` parallelises
// only over independent outputs (dims, rows, layers), so both namespaces
// produce bit-identical results.

#include <cstddef>
#include <span>

#include "revis/matrix.hpp"
#include "revis/tensorio.hpp"

namespace revis::kernels {

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm(std::span<const double> a) noexcept;

namespace serial {

/// out[j] = mean_i (state[i, a, layer, j] - state[i, b, layer, j]), two-pass.
void mean_difference(const HiddenStateDump& dump, std::size_t cond_a, std::size_t cond_b, std::size_t layer,
                     std::span<double> out);

/// out[i] = -cos(states.row(i), v); NaN where the row has zero norm.
void risk_scores(const Matrix& states, std::span<const double> v, double v_norm, std::span<double> out);

/// y = W x with W row-major (rows x cols) in f32.
void matvec(std::span<const float> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);

}  // namespace serial

namespace omp {

void mean_difference(const HiddenStateDump& dump, std::size_t cond_a, std::size_t cond_b, std::size_t layer,
                     std::span<double> out);
void risk_scores(const Matrix& states, std::span<const double> v, double v_norm, std::span<double> out);
void matvec(std::span<const float> w, std::size_t rows, std::size_t cols, std::span<const double> x,
            std::span<double> y);

}  // namespace omp

/// Number of threads the omp kernels will use (1 without OpenMP).
int max_threads() noexcept;

}  // namespace revis::kernels
