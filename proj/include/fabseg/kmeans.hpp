#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "fabseg/error.hpp"
#include "fabseg/rng.hpp"

namespace fabseg {

template <typename Scalar>
struct KMeansResult {
  std::vector<int> labels;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> centers;  // k x d
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's k-means over the rows of `points` with k-means++ seeding.
///
/// Seeding draws from the rows in lexicographic order rather than storage
/// order, so permuting the rows permutes the labels and nothing else. Ties in
/// assignment go to the lowest cluster index; a cluster that empties is
/// re-seeded with the point farthest from its current center.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points, int k, std::uint64_t seed,
                                              int max_iterations = 200) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  if (k < 1 || k > n) throw InvalidArgument("k-means needs 1 <= k <= number of points");

  std::vector<Eigen::Index> canonical(static_cast<std::size_t>(n));
  std::iota(canonical.begin(), canonical.end(), Eigen::Index{0});
  std::stable_sort(canonical.begin(), canonical.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < d; ++c) {
      if (points(a, c) < points(b, c)) return true;
      if (points(b, c) < points(a, c)) return false;
    }
    return false;
  });

  auto sq_dist = [&](Eigen::Index i, const Matrix& centers, Eigen::Index c) {
    return (points.row(i) - centers.row(c)).squaredNorm();
  };

  Rng rng(seed);
  Matrix centers(k, d);
  centers.row(0) = points.row(canonical[uniform_index(rng, static_cast<std::uint64_t>(n))]);
  std::vector<Scalar> nearest(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) nearest[i] = sq_dist(i, centers, 0);
  for (int c = 1; c < k; ++c) {
    Scalar total = 0;
    for (Eigen::Index idx : canonical) total += nearest[idx];
    Eigen::Index pick = canonical.back();
    if (total > 0) {
      Scalar target = static_cast<Scalar>(uniform_unit(rng)) * total;
      for (Eigen::Index idx : canonical) {
        target -= nearest[idx];
        if (target < 0 && nearest[idx] > 0) {
          pick = idx;
          break;
        }
      }
    } else {
      pick = canonical[uniform_index(rng, static_cast<std::uint64_t>(n))];
    }
    centers.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_dist(i, centers, c));
  }

  KMeansResult<Scalar> result;
  result.labels.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 1; iter <= max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      Scalar best_d = sq_dist(i, centers, 0);
      for (int c = 1; c < k; ++c) {
        const Scalar dist = sq_dist(i, centers, c);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (result.labels[i] != best) {
        result.labels[i] = best;
        changed = true;
      }
    }
    result.iterations = iter;

    Matrix sums = Matrix::Zero(k, d);
    std::vector<Eigen::Index> sizes(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(result.labels[i]) += points.row(i);
      ++sizes[result.labels[i]];
    }
    bool reseeded = false;
    for (int c = 0; c < k; ++c) {
      if (sizes[c] > 0) {
        centers.row(c) = sums.row(c) / static_cast<Scalar>(sizes[c]);
        continue;
      }
      // empty cluster: steal the point farthest from its own center
      Eigen::Index far = 0;
      Scalar far_d = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (sizes[result.labels[i]] <= 1) continue;
        const Scalar dist = sq_dist(i, centers, result.labels[i]);
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      if (far_d < 0) continue;
      --sizes[result.labels[far]];
      result.labels[far] = c;
      sizes[c] = 1;
      centers.row(c) = points.row(far);
      reseeded = true;
    }
    if (!changed && !reseeded) {
      result.converged = true;
      break;
    }
  }
  result.centers = centers;
  return result;
}

}  // namespace fabseg
