#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "survlr/error.hpp"
#include "survlr/types.hpp"

namespace survlr {

/// Per-column z-scoring. Columns with zero spread keep scale 1.
struct Standardizer {
  VectorD mean;
  VectorD scale;

  bool empty() const { return mean.size() == 0; }

  /// Fit on the given rows only.
  static Standardizer fit(const MatrixD& features, std::span<const std::size_t> rows) {
    detail::require(!rows.empty(), ErrorKind::InvalidInput, "cannot fit a standardizer on zero rows");
    const Eigen::Index m = features.cols();
    Standardizer s;
    s.mean = VectorD::Zero(m);
    for (auto r : rows) s.mean += features.row(static_cast<Eigen::Index>(r)).transpose();
    s.mean /= static_cast<double>(rows.size());
    VectorD var = VectorD::Zero(m);
    for (auto r : rows) {
      const VectorD d = features.row(static_cast<Eigen::Index>(r)).transpose() - s.mean;
      var += d.cwiseProduct(d);
    }
    var /= static_cast<double>(rows.size());
    s.scale = var.cwiseSqrt();
    for (Eigen::Index c = 0; c < m; ++c)
      if (!(s.scale(c) > 1e-12)) s.scale(c) = 1.0;
    return s;
  }

  static Standardizer fit(const MatrixD& features) {
    std::vector<std::size_t> all(static_cast<std::size_t>(features.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return fit(features, all);
  }

  MatrixD apply(const MatrixD& features) const {
    if (empty()) return features;
    detail::require(features.cols() == mean.size(), ErrorKind::InvalidInput,
                    "feature width does not match the standardizer");
    return ((features.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
        .matrix();
  }
};

inline MatrixD select_rows(const MatrixD& m, std::span<const std::size_t> rows) {
  MatrixD out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

template <class V>
std::vector<V> select(std::span<const V> values, std::span<const std::size_t> rows) {
  std::vector<V> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(values[r]);
  return out;
}

}  // namespace survlr
