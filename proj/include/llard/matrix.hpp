// Copyright 2026 The LLaRD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "llard/common.hpp"

namespace llard {

/// Dense row-major matrix of doubles. All model math runs in double; 32-bit
/// float is used only at serialization boundaries.
class Mat {
public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return a_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return a_[i * cols_ + j];
  }

  double* row(std::size_t i) { return a_.data() + i * cols_; }
  const double* row(std::size_t i) const { return a_.data() + i * cols_; }
  std::span<double> row_span(std::size_t i) { return {row(i), cols_}; }
  std::span<const double> row_span(std::size_t i) const {
    return {row(i), cols_};
  }

  std::vector<double>& data() { return a_; }
  const std::vector<double>& data() const { return a_; }

  void set_zero() { std::fill(a_.begin(), a_.end(), 0.0); }

  static Mat randn(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    Mat m(rows, cols);
    for (double& x : m.a_) x = scale * rng.normal();
    return m;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> a_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double l2_norm(std::span<const double> a) {
  return std::sqrt(dot(a, a));
}

inline double sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Cosine similarity; a zero-norm side yields similarity 0 (callers treat the
/// gradient as 0 there as well).
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

inline void axpy(double alpha, std::span<const double> x,
                 std::span<double> y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

// ---------------------------------------------------------------------------
// float32 section I/O for artifact files. In-memory math stays double; files
// carry row-major little-endian float32.
// ---------------------------------------------------------------------------

inline void write_f32(std::ostream& out, std::span<const double> values) {
  std::vector<float> f(values.size());
  for (std::size_t k = 0; k < values.size(); ++k)
    f[k] = static_cast<float>(values[k]);
  out.write(reinterpret_cast<const char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
}

inline void read_f32(std::istream& in, std::span<double> values) {
  std::vector<float> f(values.size());
  if (!in.read(reinterpret_cast<char*>(f.data()),
               static_cast<std::streamsize>(f.size() * sizeof(float))))
    throw DataError("truncated float32 section");
  for (std::size_t k = 0; k < values.size(); ++k)
    values[k] = static_cast<double>(f[k]);
}

inline void write_f32(std::ostream& out, const Mat& m) {
  write_f32(out, std::span<const double>(m.data()));
}

inline void read_f32(std::istream& in, Mat& m) {
  read_f32(in, std::span<double>(m.data()));
}

/// Round every value through float32; after this, a float32 file round-trip
/// reproduces the values exactly.
inline void quantize_f32(std::span<double> values) {
  for (double& x : values) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace llard
