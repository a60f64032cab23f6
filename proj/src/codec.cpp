#include "ecpipe/codec.hpp"

#include <algorithm>
#include <set>

#include "ecpipe/error.hpp"

namespace ecpipe::codec {

Matrix Matrix::identity(int size) {
  Matrix m(size, size);
  for (int i = 0; i < size; ++i) m.at(i, i) = 1;
  return m;
}

Matrix Matrix::select_rows(std::span<const int> rows) const {
  Matrix out(static_cast<int>(rows.size()), cols_);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= rows_) {
      raise(ErrorCode::invalid_argument, "row index out of range");
    }
    std::copy_n(data_.begin() + rows[r] * cols_, cols_,
                out.data_.begin() + static_cast<int>(r) * cols_);
  }
  return out;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols_ != rhs.rows_) raise(ErrorCode::length_mismatch, "matrix shape mismatch");
  Matrix out(rows_, rhs.cols_);
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < rhs.cols_; ++c) {
      Element acc = 0;
      for (int i = 0; i < cols_; ++i) acc ^= gf::mul(at(r, i), rhs.at(i, c));
      out.at(r, c) = acc;
    }
  }
  return out;
}

Matrix Matrix::inverse() const {
  if (rows_ != cols_) raise(ErrorCode::invalid_argument, "inverse of non-square matrix");
  const int size = rows_;
  Matrix work = *this;
  Matrix inv = identity(size);
  for (int col = 0; col < size; ++col) {
    int pivot = col;
    while (pivot < size && work.at(pivot, col) == 0) ++pivot;
    if (pivot == size) raise(ErrorCode::singular_matrix, "matrix is singular");
    if (pivot != col) {
      for (int c = 0; c < size; ++c) {
        std::swap(work.at(pivot, c), work.at(col, c));
        std::swap(inv.at(pivot, c), inv.at(col, c));
      }
    }
    const Element scale = gf::inv(work.at(col, col));
    for (int c = 0; c < size; ++c) {
      work.at(col, c) = gf::mul(work.at(col, c), scale);
      inv.at(col, c) = gf::mul(inv.at(col, c), scale);
    }
    for (int r = 0; r < size; ++r) {
      if (r == col) continue;
      const Element factor = work.at(r, col);
      if (factor == 0) continue;
      for (int c = 0; c < size; ++c) {
        work.at(r, c) ^= gf::mul(factor, work.at(col, c));
        inv.at(r, c) ^= gf::mul(factor, inv.at(col, c));
      }
    }
  }
  return inv;
}

CodingScheme::CodingScheme(int n, int k) : n_(n), k_(k) {
  if (k < 1 || n <= k) {
    raise(ErrorCode::invalid_argument,
          "coding scheme needs 1 <= k < n, got n=" + std::to_string(n) +
              " k=" + std::to_string(k));
  }
  if (n > kMaxWidth) {
    raise(ErrorCode::invalid_argument,
          "RS over GF(2^8) supports n <= 257, got n=" + std::to_string(n));
  }
  // Vandermonde rows x^0..x^{k-1} at the distinct points 0..255; a 257th row
  // takes the point at infinity (e_{k-1}).
  Matrix vandermonde(n, k);
  for (int r = 0; r < n; ++r) {
    if (r == 256) {
      vandermonde.at(r, k - 1) = 1;
      continue;
    }
    for (int c = 0; c < k; ++c) {
      vandermonde.at(r, c) = gf::pow(static_cast<Element>(r), static_cast<unsigned>(c));
    }
  }
  std::vector<int> top(k);
  for (int i = 0; i < k; ++i) top[i] = i;
  generator_ = vandermonde * vandermonde.select_rows(top).inverse();
}

CodingScheme CodingScheme::from_name(std::string_view name) {
  auto [n, k] = parse_scheme_name(name);
  return CodingScheme(n, k);
}

namespace {

std::uint64_t binomial(int n, int k) {
  std::uint64_t out = 1;
  for (int i = 1; i <= k; ++i) {
    out = out * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    if (out > CodingScheme::kMaxMdsChecks) return out;
  }
  return out;
}

bool next_subset(std::vector<int>& rows, int n) {
  const int k = static_cast<int>(rows.size());
  int i = k - 1;
  while (i >= 0 && rows[i] == n - k + i) --i;
  if (i < 0) return false;
  ++rows[i];
  for (int j = i + 1; j < k; ++j) rows[j] = rows[j - 1] + 1;
  return true;
}

}  // namespace

CodingScheme CodingScheme::with_generator(Matrix generator) {
  const int n = generator.rows();
  const int k = generator.cols();
  if (k < 1 || n <= k || n > kMaxWidth) {
    raise(ErrorCode::invalid_argument, "generator must be n x k with 1 <= k < n <= 257");
  }
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      if (generator.at(r, c) != (r == c ? 1 : 0)) {
        raise(ErrorCode::invalid_argument, "generator is not systematic");
      }
    }
  }
  if (binomial(n, k) <= kMaxMdsChecks) {
    std::vector<int> rows(k);
    for (int i = 0; i < k; ++i) rows[i] = i;
    do {
      try {
        (void)generator.select_rows(rows).inverse();
      } catch (const Error&) {
        raise(ErrorCode::singular_matrix, "generator is not MDS");
      }
    } while (next_subset(rows, n));
  }
  CodingScheme out;
  out.n_ = n;
  out.k_ = k;
  out.generator_ = std::move(generator);
  return out;
}

std::vector<Bytes> encode_stripe(const CodingScheme& scheme,
                                 std::span<const Bytes> data) {
  if (static_cast<int>(data.size()) != scheme.k()) {
    raise(ErrorCode::invalid_argument, "encode needs exactly k data blocks");
  }
  const std::size_t len = data.front().size();
  for (const auto& block : data) {
    if (block.size() != len) raise(ErrorCode::length_mismatch, "data blocks differ in length");
  }
  std::vector<Bytes> out(data.begin(), data.end());
  const auto& g = scheme.generator();
  for (int r = scheme.k(); r < scheme.n(); ++r) {
    Bytes parity(len, 0);
    for (int c = 0; c < scheme.k(); ++c) gf::mul_add_region(g.at(r, c), data[c], parity);
    out.push_back(std::move(parity));
  }
  return out;
}

DecodingCoefficients decoding_coefficients(const CodingScheme& scheme,
                                           std::span<const int> targets,
                                           std::span<const int> helpers) {
  if (static_cast<int>(helpers.size()) != scheme.k()) {
    raise(ErrorCode::invalid_argument, "decoding needs exactly k helpers");
  }
  if (targets.empty()) raise(ErrorCode::invalid_argument, "no targets to decode");
  std::set<int> seen;
  for (int h : helpers) {
    if (h < 0 || h >= scheme.n() || !seen.insert(h).second) {
      raise(ErrorCode::invalid_argument, "helper indices must be distinct and < n");
    }
  }
  for (int t : targets) {
    if (t < 0 || t >= scheme.n()) raise(ErrorCode::invalid_argument, "target index out of range");
    if (seen.count(t)) raise(ErrorCode::invalid_argument, "target is also a helper");
  }

  // data = inv(G_H) * helper_blocks, so target = G_t * inv(G_H) * helper_blocks.
  const Matrix helper_inv = scheme.generator().select_rows(helpers).inverse();
  DecodingCoefficients out;
  out.targets.assign(targets.begin(), targets.end());
  out.helpers.assign(helpers.begin(), helpers.end());
  out.coefficients = scheme.generator().select_rows(targets) * helper_inv;
  return out;
}

std::vector<Bytes> decode(const CodingScheme& scheme,
                          const std::map<int, Bytes>& available,
                          std::span<const int> targets) {
  if (static_cast<int>(available.size()) < scheme.k()) {
    raise(ErrorCode::unrecoverable, "fewer than k blocks available");
  }
  std::vector<int> rows;
  std::vector<const Bytes*> blocks;
  for (const auto& [index, block] : available) {
    if (static_cast<int>(rows.size()) == scheme.k()) break;
    rows.push_back(index);
    blocks.push_back(&block);
  }
  const std::size_t len = blocks.front()->size();
  for (const auto* b : blocks) {
    if (b->size() != len) raise(ErrorCode::length_mismatch, "available blocks differ in length");
  }

  const Matrix helper_inv = scheme.generator().select_rows(rows).inverse();
  std::vector<Bytes> data(scheme.k(), Bytes(len, 0));
  for (int d = 0; d < scheme.k(); ++d) {
    for (int i = 0; i < scheme.k(); ++i) {
      gf::mul_add_region(helper_inv.at(d, i), *blocks[i], data[d]);
    }
  }

  std::vector<Bytes> out;
  out.reserve(targets.size());
  const auto& g = scheme.generator();
  for (int t : targets) {
    if (t < 0 || t >= scheme.n()) raise(ErrorCode::invalid_argument, "target index out of range");
    Bytes block(len, 0);
    for (int c = 0; c < scheme.k(); ++c) gf::mul_add_region(g.at(t, c), data[c], block);
    out.push_back(std::move(block));
  }
  return out;
}

void combine_into(std::span<std::uint8_t> acc, std::span<const std::uint8_t> local,
                  Element a) {
  gf::mul_add_region(a, local, acc);
}

Bytes combine(std::span<const std::uint8_t> acc, std::span<const std::uint8_t> local,
              Element a) {
  if (acc.size() != local.size()) raise(ErrorCode::length_mismatch, "combine length mismatch");
  Bytes out(acc.begin(), acc.end());
  gf::mul_add_region(a, local, out);
  return out;
}

}  // namespace ecpipe::codec
