#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ecpipe/gf.hpp"
#include "ecpipe/types.hpp"

namespace ecpipe::codec {

using gf::Element;

/// Dense row-major matrix over GF(2^8).
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  static Matrix identity(int size);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  Element& at(int r, int c) { return data_[r * cols_ + c]; }
  Element at(int r, int c) const { return data_[r * cols_ + c]; }
  std::span<const Element> row(int r) const {
    return {data_.data() + r * cols_, static_cast<std::size_t>(cols_)};
  }

  Matrix select_rows(std::span<const int> rows) const;
  Matrix operator*(const Matrix& rhs) const;
  /// Gauss-Jordan inverse; throws Error(singular_matrix).
  Matrix inverse() const;

  bool operator==(const Matrix&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Element> data_;
};

/// Systematic Reed-Solomon code: generator rows 0..k-1 are the identity,
/// rows k..n-1 produce parity. Built by column-reducing a Vandermonde matrix,
/// so every k-row submatrix is invertible.
class CodingScheme {
 public:
  static constexpr int kMaxWidth = (1 << gf::kWordBits) + 1;

  CodingScheme(int n, int k);
  static CodingScheme from_name(std::string_view name);
  /// Uses a caller-supplied n x k generator. The top k rows must be the
  /// identity; MDS is checked exhaustively when there are at most
  /// kMaxMdsChecks k-row subsets.
  static CodingScheme with_generator(Matrix generator);
  static constexpr std::uint64_t kMaxMdsChecks = 100000;

  int n() const { return n_; }
  int k() const { return k_; }
  int w() const { return gf::kWordBits; }
  std::string name() const { return scheme_name(n_, k_); }
  const Matrix& generator() const { return generator_; }

 private:
  CodingScheme() = default;

  int n_ = 0;
  int k_ = 0;
  Matrix generator_;
};

/// Decoding coefficients for rebuilding `targets` from the blocks at `helpers`:
/// target j = sum_i coefficients.at(j, i) * block[helpers[i]].
struct DecodingCoefficients {
  std::vector<int> targets;
  std::vector<int> helpers;
  Matrix coefficients;  // targets.size() x helpers.size()

  Element at(int target_pos, int helper_pos) const {
    return coefficients.at(target_pos, helper_pos);
  }
};

/// Encodes k equal-length data blocks into the n blocks of a stripe.
std::vector<Bytes> encode_stripe(const CodingScheme& scheme,
                                 std::span<const Bytes> data);

DecodingCoefficients decoding_coefficients(const CodingScheme& scheme,
                                           std::span<const int> targets,
                                           std::span<const int> helpers);

/// Full-matrix decode: recovers the k data blocks from any k available blocks
/// and re-encodes the requested targets.
std::vector<Bytes> decode(const CodingScheme& scheme,
                          const std::map<int, Bytes>& available,
                          std::span<const int> targets);

/// acc ^= a * local, in place.
void combine_into(std::span<std::uint8_t> acc, std::span<const std::uint8_t> local,
                  Element a);
/// Returns acc ^ (a * local).
Bytes combine(std::span<const std::uint8_t> acc,
              std::span<const std::uint8_t> local, Element a);

}  // namespace ecpipe::codec
