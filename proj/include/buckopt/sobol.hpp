#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <vector>

#include "buckopt/errors.hpp"
#include "buckopt/sobol_table.hpp"

namespace buckopt {

/// Gray-code Sobol sequence with 52 output bits, so every coordinate is an
/// exactly representable multiple of 2^-52 in [0, 1).  Points are produced
/// in Gray-code order; jumping to an arbitrary start index costs O(log n).
/// The sequence proper begins with the all-zero point at index 0, which the
/// default start index skips.
class SobolStream {
 public:
  static constexpr int kBits = 52;

  explicit SobolStream(int dim, std::uint64_t start_index = 1) : dim_(dim) {
    if (dim < 1 || dim > detail::kSobolMaxDim)
      throw InputError("SobolStream: dimension must be in [1, 64]");
    if (start_index >= (std::uint64_t{1} << kBits))
      throw InputError("SobolStream: start index out of range");
    build_direction_numbers();
    seek(start_index);
  }

  int dim() const { return dim_; }

  /// Index of the point the next call will emit.
  std::uint64_t index() const { return next_index_; }

  /// Raw 52-bit integer coordinates of the next point.
  void next_raw(std::uint64_t* out) {
    for (int j = 0; j < dim_; ++j) out[j] = state_[j];
    advance();
  }

  Eigen::VectorXd next() {
    Eigen::VectorXd u(dim_);
    constexpr double scale = 1.0 / static_cast<double>(std::uint64_t{1} << kBits);
    for (int j = 0; j < dim_; ++j) u(j) = static_cast<double>(state_[j]) * scale;
    advance();
    return u;
  }

  /// Reposition the stream so the next emitted point has the given index.
  void seek(std::uint64_t index) {
    next_index_ = index;
    const std::uint64_t gray = index ^ (index >> 1);
    state_.assign(dim_, 0);
    for (int k = 0; k < kBits; ++k)
      if (gray & (std::uint64_t{1} << k))
        for (int j = 0; j < dim_; ++j) state_[j] ^= v_[j][k];
  }

 private:
  void build_direction_numbers() {
    v_.assign(dim_, std::vector<std::uint64_t>(kBits));
    for (int k = 0; k < kBits; ++k) v_[0][k] = std::uint64_t{1} << (kBits - 1 - k);
    for (int j = 1; j < dim_; ++j) {
      const detail::SobolTableRow& row = detail::kSobolTable[j - 1];
      const int s = row.s;
      std::uint64_t m[kBits];
      for (int k = 0; k < s; ++k) m[k] = row.m[k];
      for (int k = s; k < kBits; ++k) {
        std::uint64_t mk = m[k - s] ^ (m[k - s] << s);
        for (int i = 1; i < s; ++i)
          if ((row.a >> (s - 1 - i)) & 1u) mk ^= m[k - i] << i;
        m[k] = mk;
      }
      for (int k = 0; k < kBits; ++k) v_[j][k] = m[k] << (kBits - 1 - k);
    }
  }

  void advance() {
    ++next_index_;
    if (next_index_ >= (std::uint64_t{1} << kBits))
      throw SolveError("SobolStream: sequence exhausted");
    const int k = std::countr_zero(next_index_);
    for (int j = 0; j < dim_; ++j) state_[j] ^= v_[j][k];
  }

  int dim_;
  std::uint64_t next_index_ = 0;
  std::vector<std::uint64_t> state_;
  std::vector<std::vector<std::uint64_t>> v_;
};

/// First `count` points after skipping `skip` from the zero-skipping stream,
/// one point per row.
inline Eigen::MatrixXd sobol_points(int dim, int count, std::uint64_t skip = 0) {
  if (count < 0) throw InputError("sobol_points: negative count");
  SobolStream stream(dim, 1 + skip);
  Eigen::MatrixXd P(count, dim);
  for (int i = 0; i < count; ++i) P.row(i) = stream.next().transpose();
  return P;
}

} // namespace buckopt
