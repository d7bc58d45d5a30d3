#include "esh/encoder.hpp"

#include "esh/error.hpp"
#include "esh/optimizer.hpp"
#include "esh/parallel.hpp"

#include <string>

namespace esh {
namespace {

// Shared by training and linear query encoding so both round identically.
Vector project_row(const Matrix& w, const Eigen::Ref<const Vector>& x) {
  return w.transpose() * x;
}

}  // namespace

std::string_view to_string(QueryMode mode) noexcept {
  return mode == QueryMode::kGraph ? "graph" : "linear";
}

QueryMode query_mode_from_string(std::string_view name) {
  if (name == "graph") return QueryMode::kGraph;
  if (name == "linear") return QueryMode::kLinear;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown query mode '" + std::string(name) + "'");
}

PackedCodes encode_train(const RowMatrix& x, const Matrix& w) {
  if (x.cols() != w.rows()) {
    throw Error(ErrorCode::kShape, "features have " + std::to_string(x.cols()) +
                                       " dims, W expects " +
                                       std::to_string(w.rows()));
  }
  PackedCodes codes(x.rows(), w.cols());
  parallel_for(static_cast<std::size_t>(x.rows()), [&](std::size_t b, std::size_t e) {
    for (auto i = static_cast<Index>(b); i < static_cast<Index>(e); ++i) {
      const Vector xw = project_row(w, x.row(i).transpose());
      for (Index j = 0; j < w.cols(); ++j) codes.set_bit(i, j, xw(j) >= 0.0);
    }
  });
  return codes;
}

Matrix vote_matrix(const PackedCodes& codes, const SparseAffinityRows& z,
                   const AnchorDegrees& degrees) {
  if (codes.size() != z.rows() || degrees.lambda.size() != z.anchors()) {
    throw Error(ErrorCode::kShape, "codes, affinity and degrees disagree in shape");
  }
  const Index k = codes.bits();
  Matrix votes = Matrix::Zero(k, z.anchors());
  Vector b(k);
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = 0; j < k; ++j) b(j) = codes.bit(i, j) ? 1.0 : -1.0;
    const auto idx = z.indices(i);
    const auto w = z.weights(i);
    for (std::size_t t = 0; t < idx.size(); ++t) votes.col(idx[t]).noalias() += w[t] * b;
  }
  for (Index j = 0; j < z.anchors(); ++j) {
    if (degrees.lambda(j) < kLambdaFloor) {
      throw Error(ErrorCode::kDegenerate,
                  "anchor " + std::to_string(j) + " is dead; prune before voting");
    }
    votes.col(j) /= degrees.lambda(j);
  }
  return votes;
}

HashModel make_model(ModelParts parts) {
  const Index d = parts.w.rows();
  if (parts.stats.mean.size() != d || parts.graph.anchors.dims() != d) {
    throw Error(ErrorCode::kShape, "model components disagree on dimension");
  }
  if (parts.train_codes.bits() != parts.w.cols()) {
    throw Error(ErrorCode::kShape, "train codes and W disagree on bit count");
  }
  HashModel model;
  model.vote_matrix = vote_matrix(parts.train_codes, parts.graph.z, parts.graph.degrees);
  model.w = std::move(parts.w);
  model.stats = std::move(parts.stats);
  model.anchors = std::move(parts.graph.anchors);
  model.degrees = std::move(parts.graph.degrees);
  model.query_mode = parts.query_mode;
  model.config_hash = parts.config_hash;
  if (parts.keep_codes) model.train_codes = std::move(parts.train_codes);
  if (parts.keep_affinity) model.train_affinity = std::move(parts.graph.z);
  return model;
}

Vector query_votes(const Eigen::Ref<const Vector>& x_raw,
                   const HashModel& model) {
  if (model.anchors.size() < 1 || model.vote_matrix.cols() != model.anchors.size()) {
    throw Error(ErrorCode::kDegenerate, "model has no live anchors to vote with");
  }
  const Vector x = apply_standardization(x_raw, model.stats);
  const auto s = static_cast<std::size_t>(model.anchors.s);
  std::vector<std::int32_t> idx(s);
  std::vector<double> weight(s);
  affinity_row(x, model.anchors, idx, weight);
  Vector votes = Vector::Zero(model.vote_matrix.rows());
  for (std::size_t t = 0; t < s; ++t) {
    votes.noalias() += weight[t] * model.vote_matrix.col(idx[t]);
  }
  return votes;
}

Vector encode_query_graph(const Eigen::Ref<const Vector>& x_raw,
                          const HashModel& model) {
  return sgn(query_votes(x_raw, model), ZeroRule::kPositive);
}

Vector encode_query_linear(const Eigen::Ref<const Vector>& x_raw,
                           const HashModel& model) {
  const Vector x = apply_standardization(x_raw, model.stats);
  return sgn(project_row(model.w, x), ZeroRule::kPositive);
}

PackedCodes encode_queries(const FeatureMatrix& x_raw, const HashModel& model,
                           QueryMode mode) {
  if (x_raw.dims() != model.dims()) {
    throw Error(ErrorCode::kShape, "queries have " + std::to_string(x_raw.dims()) +
                                       " dims, model expects " +
                                       std::to_string(model.dims()));
  }
  PackedCodes codes(x_raw.rows(), model.bits());
  parallel_for(static_cast<std::size_t>(x_raw.rows()), [&](std::size_t b, std::size_t e) {
    for (auto i = static_cast<Index>(b); i < static_cast<Index>(e); ++i) {
      const Vector x = x_raw.row(i).transpose();
      const Vector code = mode == QueryMode::kGraph ? encode_query_graph(x, model)
                                                    : encode_query_linear(x, model);
      for (Index j = 0; j < code.size(); ++j) codes.set_bit(i, j, code(j) > 0.0);
    }
  });
  return codes;
}

}  // namespace esh
