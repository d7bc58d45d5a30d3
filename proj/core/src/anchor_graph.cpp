#include "esh/anchor_graph.hpp"

#include "esh/error.hpp"
#include "esh/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace esh {
namespace {

constexpr Index kDistanceBlock = 2048;

// Nearest-center assignment for k-means. Distances use the expanded form
// |x|^2 - 2 x.c + |c|^2 so each block is a single matrix product.
void assign_nearest(const RowMatrix& x, const RowMatrix& centers,
                    std::vector<Index>& assignment, Vector& dist2) {
  const Index n = x.rows();
  const Vector center_norms = centers.rowwise().squaredNorm();
  assignment.assign(static_cast<std::size_t>(n), 0);
  dist2.resize(n);
  const auto blocks = static_cast<std::size_t>((n + kDistanceBlock - 1) / kDistanceBlock);
  parallel_for(blocks, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const Index begin = static_cast<Index>(b) * kDistanceBlock;
      const Index rows = std::min(kDistanceBlock, n - begin);
      const auto block = x.middleRows(begin, rows);
      const Matrix cross = block * centers.transpose();
      for (Index r = 0; r < rows; ++r) {
        const double xn = block.row(r).squaredNorm();
        Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < centers.rows(); ++c) {
          const double d = xn - 2.0 * cross(r, c) + center_norms(c);
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        assignment[static_cast<std::size_t>(begin + r)] = best;
        dist2(begin + r) = std::max(best_d, 0.0);
      }
    }
  });
}

RowMatrix seed_plus_plus(const RowMatrix& x, Index k, std::mt19937_64& rng) {
  const Index n = x.rows();
  RowMatrix centers(k, x.cols());
  std::vector<std::uint8_t> chosen(static_cast<std::size_t>(n), 0);

  std::uniform_int_distribution<Index> pick(0, n - 1);
  Index first = pick(rng);
  centers.row(0) = x.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;

  Vector d2 = (x.rowwise() - x.row(first)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index next = -1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (d2(i) > 0.0 && acc >= target) {
          next = i;
          break;
        }
      }
      if (next < 0) {
        for (Index i = n - 1; i >= 0; --i) {
          if (d2(i) > 0.0) {
            next = i;
            break;
          }
        }
      }
    }
    if (next < 0) {
      // every remaining point coincides with a chosen center
      for (Index i = 0; i < n; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) {
          next = i;
          break;
        }
      }
    }
    centers.row(c) = x.row(next);
    chosen[static_cast<std::size_t>(next)] = 1;
    d2 = d2.cwiseMin((x.rowwise() - x.row(next)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

SparseAffinityRows::SparseAffinityRows(Index n, Index m, Index s)
    : n_(n),
      m_(m),
      s_(s),
      index_(static_cast<std::size_t>(n * s), 0),
      weight_(static_cast<std::size_t>(n * s), 0.0) {}

Matrix SparseAffinityRows::to_dense() const {
  Matrix z = Matrix::Zero(n_, m_);
  for (Index i = 0; i < n_; ++i) {
    const auto idx = indices(i);
    const auto w = weights(i);
    for (Index t = 0; t < s_; ++t) z(i, idx[t]) += w[t];
  }
  return z;
}

void SparseAffinityRows::remap_anchors(std::span<const std::int32_t> remap,
                                       Index new_m) {
  for (auto& j : index_) {
    const std::int32_t mapped = remap[static_cast<std::size_t>(j)];
    if (mapped < 0) {
      throw Error(ErrorCode::kInvalidArgument, "remap drops a referenced anchor");
    }
    j = mapped;
  }
  m_ = new_m;
}

RowMatrix kmeans(const FeatureMatrix& x, Index k, int iters,
                 std::uint64_t seed) {
  const Index n = x.rows();
  if (k < 1 || k > n) {
    throw Error(ErrorCode::kInvalidArgument,
                "anchor count " + std::to_string(k) + " must lie in [1, " +
                    std::to_string(n) + "]");
  }
  if (iters < 1) {
    throw Error(ErrorCode::kInvalidArgument, "k-means needs at least one iteration");
  }
  const RowMatrix& v = x.values();
  std::mt19937_64 rng(seed);
  RowMatrix centers = seed_plus_plus(v, k, rng);

  std::vector<Index> assignment;
  Vector dist2;
  for (int it = 0; it < iters; ++it) {
    assign_nearest(v, centers, assignment, dist2);

    RowMatrix sums = RowMatrix::Zero(k, v.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const Index c = assignment[static_cast<std::size_t>(i)];
      sums.row(c) += v.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      Index far = 0;
      dist2.maxCoeff(&far);
      centers.row(c) = v.row(far);
      dist2(far) = 0.0;
    }
  }
  return centers;
}

NearestAnchors nearest_anchors(const Eigen::Ref<const Vector>& x,
                               const RowMatrix& centers, Index s) {
  const Index m = centers.rows();
  if (s < 1 || s > m) {
    throw Error(ErrorCode::kInvalidArgument,
                "nearest-anchor count " + std::to_string(s) +
                    " must lie in [1, " + std::to_string(m) + "]");
  }
  if (x.size() != centers.cols()) {
    throw Error(ErrorCode::kShape, "sample and anchors differ in dimension");
  }
  NearestAnchors out;
  out.index.reserve(static_cast<std::size_t>(s) + 1);
  out.dist2.reserve(static_cast<std::size_t>(s) + 1);
  for (Index j = 0; j < m; ++j) {
    const double d = (centers.row(j).transpose() - x).squaredNorm();
    if (static_cast<Index>(out.index.size()) == s && d >= out.dist2.back()) continue;
    // insertion keeps (distance, index) order; later equal distances go after
    auto pos = std::upper_bound(out.dist2.begin(), out.dist2.end(), d);
    const auto at = pos - out.dist2.begin();
    out.dist2.insert(pos, d);
    out.index.insert(out.index.begin() + at, static_cast<std::int32_t>(j));
    if (static_cast<Index>(out.index.size()) > s) {
      out.dist2.pop_back();
      out.index.pop_back();
    }
  }
  return out;
}

AnchorSet fit_anchors(const FeatureMatrix& x, const AnchorParams& params) {
  if (params.nearest < 1 || params.nearest > params.anchors) {
    throw Error(ErrorCode::kInvalidArgument,
                "nearest-anchor count s must lie in [1, m]");
  }
  AnchorSet set;
  set.centers = kmeans(x, params.anchors, params.kmeans_iters, params.seed);
  set.s = params.nearest;

  if (params.sigma2) {
    if (!(*params.sigma2 > 0.0) || !std::isfinite(*params.sigma2)) {
      throw Error(ErrorCode::kInvalidArgument, "sigma2 must be positive and finite");
    }
    set.sigma2 = *params.sigma2;
    return set;
  }
  Vector kth(x.rows());
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t b, std::size_t e) {
    for (auto i = static_cast<Index>(b); i < static_cast<Index>(e); ++i) {
      kth(i) = nearest_anchors(x.row(i).transpose(), set.centers, set.s).dist2.back();
    }
  });
  const double mean = kth.mean();
  // all samples sit on their s-th anchor (e.g. m = n, s = 1): any width works
  set.sigma2 = (mean > 0.0 && std::isfinite(mean)) ? mean : 1.0;
  return set;
}

void affinity_row(const Eigen::Ref<const Vector>& x, const AnchorSet& anchors,
                  std::span<std::int32_t> index, std::span<double> weight) {
  const NearestAnchors nn = nearest_anchors(x, anchors.centers, anchors.s);
  const double base = nn.dist2.front();
  double total = 0.0;
  for (std::size_t t = 0; t < nn.index.size(); ++t) {
    index[t] = nn.index[t];
    weight[t] = std::exp(-(nn.dist2[t] - base) / anchors.sigma2);
    total += weight[t];
  }
  for (auto& w : weight) w /= total;
}

SparseAffinityRows build_z(const FeatureMatrix& x, const AnchorSet& anchors) {
  if (anchors.s < 1 || anchors.s > anchors.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "s = " + std::to_string(anchors.s) + " exceeds anchor count " +
                    std::to_string(anchors.size()));
  }
  if (x.dims() != anchors.dims()) {
    throw Error(ErrorCode::kShape, "features and anchors differ in dimension");
  }
  SparseAffinityRows z(x.rows(), anchors.size(), anchors.s);
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t b, std::size_t e) {
    for (auto i = static_cast<Index>(b); i < static_cast<Index>(e); ++i) {
      affinity_row(x.row(i).transpose(), anchors, z.indices(i), z.weights(i));
    }
  });
  return z;
}

AnchorDegrees compute_lambda(const SparseAffinityRows& z) {
  AnchorDegrees deg;
  deg.lambda = Vector::Zero(z.anchors());
  for (Index i = 0; i < z.rows(); ++i) {
    const auto idx = z.indices(i);
    const auto w = z.weights(i);
    for (std::size_t t = 0; t < idx.size(); ++t) deg.lambda(idx[t]) += w[t];
  }
  return deg;
}

Index prune_dead_anchors(AnchorSet& anchors, SparseAffinityRows& z,
                         AnchorDegrees& degrees) {
  const Index m = anchors.size();
  std::vector<std::int32_t> remap(static_cast<std::size_t>(m), -1);
  Index kept = 0;
  for (Index j = 0; j < m; ++j) {
    if (degrees.lambda(j) >= kLambdaFloor) {
      remap[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(kept++);
    }
  }
  if (kept == m) return 0;
  if (kept < anchors.s) {
    throw Error(ErrorCode::kDegenerate,
                "fewer live anchors than nearest anchors per sample");
  }
  for (Index i = 0; i < z.rows(); ++i) {
    for (auto j : z.indices(i)) {
      if (remap[static_cast<std::size_t>(j)] < 0) {
        throw Error(ErrorCode::kDegenerate,
                    "anchor " + std::to_string(j) +
                        " is referenced but its kernel weights vanish; "
                        "increase sigma2");
      }
    }
  }

  RowMatrix centers(kept, anchors.dims());
  Vector lambda(kept);
  for (Index j = 0; j < m; ++j) {
    const auto r = remap[static_cast<std::size_t>(j)];
    if (r < 0) continue;
    centers.row(r) = anchors.centers.row(j);
    lambda(r) = degrees.lambda(j);
  }
  anchors.centers = std::move(centers);
  degrees.lambda = std::move(lambda);
  z.remap_anchors(remap, kept);
  return m - kept;
}

Matrix compute_s(const FeatureMatrix& x, const SparseAffinityRows& z,
                 const AnchorDegrees& degrees) {
  if (x.rows() != z.rows() || degrees.lambda.size() != z.anchors()) {
    throw Error(ErrorCode::kShape, "features, affinity and degrees disagree in shape");
  }
  const RowMatrix& v = x.values();
  // P = X^T Z, accumulated one sparse row at a time.
  Matrix p = Matrix::Zero(x.dims(), z.anchors());
  for (Index i = 0; i < z.rows(); ++i) {
    const auto idx = z.indices(i);
    const auto w = z.weights(i);
    for (std::size_t t = 0; t < idx.size(); ++t) {
      p.col(idx[t]).noalias() += w[t] * v.row(i).transpose();
    }
  }
  Vector inv(z.anchors());
  for (Index j = 0; j < z.anchors(); ++j) {
    if (degrees.lambda(j) < kLambdaFloor) {
      throw Error(ErrorCode::kDegenerate,
                  "anchor " + std::to_string(j) + " has degree " +
                      std::to_string(degrees.lambda(j)) +
                      " below the floor; prune dead anchors first");
    }
    inv(j) = 1.0 / degrees.lambda(j);
  }
  Matrix s = p * inv.asDiagonal() * p.transpose();
  return 0.5 * (s + s.transpose());
}

Matrix dense_affinity(const SparseAffinityRows& z, const AnchorDegrees& degrees,
                      Index cap) {
  if (z.rows() > cap) {
    throw Error(ErrorCode::kInvalidArgument,
                "dense affinity limited to " + std::to_string(cap) + " rows");
  }
  const Matrix zd = z.to_dense();
  Vector inv = degrees.lambda.unaryExpr(
      [](double l) { return l >= kLambdaFloor ? 1.0 / l : 0.0; });
  return zd * inv.asDiagonal() * zd.transpose();
}

AnchorGraph build_anchor_graph(const FeatureMatrix& x,
                               const AnchorParams& params) {
  AnchorGraph g;
  g.anchors = fit_anchors(x, params);
  g.z = build_z(x, g.anchors);
  g.degrees = compute_lambda(g.z);
  g.dropped = prune_dead_anchors(g.anchors, g.z, g.degrees);
  return g;
}

}  // namespace esh
