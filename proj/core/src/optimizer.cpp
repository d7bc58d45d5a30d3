#include "esh/optimizer.hpp"

#include "esh/error.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>
#include <string>

namespace esh {
namespace {

constexpr double kRankTol = 1e-12;
constexpr double kQuantizationTol = 1e-12;
constexpr double kStagnationTol = 1e-24;  // on Tr(Y^T Y)
constexpr double kCayleyRcondTol = 1e-14;
constexpr Index kRowBlock = 256;

void check_shapes(const Matrix& w, const RowMatrix& x, const Matrix& s) {
  if (x.cols() != w.rows() || s.rows() != w.rows() || s.cols() != w.rows()) {
    throw Error(ErrorCode::kShape,
                "objective operands disagree: X is " + std::to_string(x.rows()) +
                    "x" + std::to_string(x.cols()) + ", S is " +
                    std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                    ", W is " + std::to_string(w.rows()) + "x" +
                    std::to_string(w.cols()));
  }
  if (x.rows() < 1) throw Error(ErrorCode::kShape, "objective needs n >= 1");
}

double sign_of(double v, ZeroRule rule) {
  if (v > 0.0) return 1.0;
  if (v < 0.0) return -1.0;
  return rule == ZeroRule::kZero ? 0.0 : 1.0;
}

class Stopwatch {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Tracks the optional relative-change stopping rule.
class EarlyStop {
 public:
  explicit EarlyStop(const TrainConfig& c) : config_(c) {}

  bool update(double previous, double current) {
    if (!config_.early_stop) return false;
    const double scale = std::max(std::abs(previous), 1e-300);
    if (std::abs(current - previous) / scale < config_.early_stop_tol) {
      ++quiet_;
    } else {
      quiet_ = 0;
    }
    return quiet_ >= config_.early_stop_window;
  }

 private:
  const TrainConfig& config_;
  int quiet_ = 0;
};

double resolve_alpha(const TrainConfig& config, const Matrix& w0,
                     const RowMatrix& x, const Matrix& s) {
  if (config.alpha) {
    if (!(*config.alpha >= 0.0) || !std::isfinite(*config.alpha)) {
      throw Error(ErrorCode::kInvalidArgument, "alpha must be finite and >= 0");
    }
    return *config.alpha;
  }
  return auto_alpha(w0, x, s);
}

}  // namespace

Matrix sgn(const Matrix& m, ZeroRule rule) {
  return m.unaryExpr([rule](double v) { return sign_of(v, rule); });
}

double orthogonality_residual(const Matrix& w) {
  const Matrix gram = w.transpose() * w;
  return (gram - Matrix::Identity(w.cols(), w.cols())).cwiseAbs().maxCoeff();
}

Matrix init_w(Index d, Index k, std::uint64_t seed) {
  if (k < 1 || k > d) {
    throw Error(ErrorCode::kInvalidArgument,
                "bits k = " + std::to_string(k) + " must lie in [1, d = " +
                    std::to_string(d) + "]");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, k);
  // fill column by column so the draw order is fixed
  for (Index c = 0; c < k; ++c) {
    for (Index r = 0; r < d; ++r) g(r, c) = normal(rng);
  }
  return stiefel_project(g);
}

LossTerms loss_terms(const Matrix& w, const RowMatrix& x, const Matrix& s) {
  check_shapes(w, x, s);
  const double n = static_cast<double>(x.rows());
  const Matrix xw = x * w;
  LossTerms t;
  t.trace_term = -(w.transpose() * s * w).trace() / n;
  t.quantization = (xw.array().abs() - 1.0).square().sum() / n;
  return t;
}

double loss(const Matrix& w, const RowMatrix& x, const Matrix& s,
            double alpha) {
  const LossTerms t = loss_terms(w, x, s);
  return t.trace_term + 0.5 * alpha * t.quantization;
}

Evaluation evaluate(const Matrix& w, const RowMatrix& x, const Matrix& s,
                    double alpha) {
  check_shapes(w, x, s);
  const double n = static_cast<double>(x.rows());
  const Matrix sw = s * w;

  // one pass over X in fixed row blocks; each block is reused for X^T r
  // while it is still in cache
  double quantization = 0.0;
  Matrix xtr = Matrix::Zero(w.rows(), w.cols());
  Matrix xw(kRowBlock, w.cols());
  for (Index b = 0; b < x.rows(); b += kRowBlock) {
    const Index rows = std::min(kRowBlock, x.rows() - b);
    const auto xb = x.middleRows(b, rows);
    auto block = xw.topRows(rows);
    block.noalias() = xb * w;
    quantization += (block.array().abs() - 1.0).square().sum();
    if (alpha != 0.0) {
      block = block.unaryExpr([](double v) { return v - sign_of(v, ZeroRule::kZero); });
      xtr.noalias() += xb.transpose() * block;
    }
  }

  Evaluation e;
  const double trace_term = -(w.cwiseProduct(sw)).sum() / n;
  e.loss = trace_term + 0.5 * alpha * quantization / n;
  e.gradient = (-2.0 / n) * sw;
  if (alpha != 0.0) e.gradient.noalias() += (alpha / n) * xtr;
  return e;
}

Matrix gradient(const Matrix& w, const RowMatrix& x, const Matrix& s,
                double alpha) {
  return evaluate(w, x, s, alpha).gradient;
}

double auto_alpha(const Matrix& w0, const RowMatrix& x, const Matrix& s) {
  const LossTerms t = loss_terms(w0, x, s);
  if (t.quantization < kQuantizationTol) {
    throw Error(ErrorCode::kDegenerate,
                "quantization term vanishes at W0; pass an explicit alpha");
  }
  return std::abs(2.0 * t.trace_term / t.quantization);
}

Matrix stiefel_project(const Matrix& w) {
  if (w.cols() < 1 || w.cols() > w.rows()) {
    throw Error(ErrorCode::kShape, "Stiefel projection needs 1 <= k <= d");
  }
  Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smallest = svd.singularValues().minCoeff();
  if (!(smallest >= kRankTol)) {
    throw Error(ErrorCode::kRankDeficient,
                "projection is not unique: smallest singular value " +
                    std::to_string(smallest));
  }
  return svd.matrixU() * svd.matrixV().transpose();
}

Matrix tangent_gradient(const Matrix& w, const Matrix& g) {
  return g - w * (g.transpose() * w);
}

Matrix cayley_step(const Matrix& w, const Matrix& g, double tau) {
  if (w.rows() != g.rows() || w.cols() != g.cols()) {
    throw Error(ErrorCode::kShape, "W and G must have the same shape");
  }
  const Index d = w.rows();
  const Matrix f = g * w.transpose() - w * g.transpose();
  const Matrix half = (0.5 * tau) * f;
  const Matrix identity = Matrix::Identity(d, d);
  Eigen::PartialPivLU<Matrix> lu(identity + half);
  if (!(lu.rcond() >= kCayleyRcondTol)) {
    throw Error(ErrorCode::kSolverFailure,
                "Cayley system is ill-conditioned (rcond " +
                    std::to_string(lu.rcond()) + ")");
  }
  Matrix y = lu.solve((identity - half) * w);
  if (!y.allFinite()) {
    throw Error(ErrorCode::kSolverFailure, "Cayley step produced non-finite values");
  }
  return y;
}

std::optional<double> bb_step(const Matrix& m, const Matrix& ydiff) {
  const double yy = ydiff.squaredNorm();
  if (!(yy > kStagnationTol)) return std::nullopt;
  const double tau = std::abs(m.cwiseProduct(ydiff).sum()) / yy;
  if (!std::isfinite(tau)) return std::nullopt;
  return std::clamp(tau, kTauMin, kTauMax);
}

void validate(const TrainConfig& config, Index dims) {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, what);
  };
  if (config.bits < 1 || config.bits > dims) {
    fail("bits k = " + std::to_string(config.bits) + " must lie in [1, d = " +
         std::to_string(dims) + "]");
  }
  if (config.iterations < 1) fail("iterations must be >= 1");
  if (!(config.eta >= 0.0) || !std::isfinite(config.eta)) fail("eta must be >= 0");
  if (!(config.tau0 >= 0.0) || !std::isfinite(config.tau0)) fail("tau0 must be >= 0");
  if (config.early_stop_window < 1) fail("early-stop window must be >= 1");
}

void write_trace_csv(std::ostream& out, const TrainTrace& trace,
                     bool include_timing) {
  char buf[64];
  auto put = [&](double v) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
  };
  out << "iteration,loss,orth_residual,step_size,elapsed_ms\n";
  for (const auto& r : trace.records) {
    out << r.iteration << ',';
    put(r.loss);
    out << ',';
    put(r.orth_residual);
    out << ',';
    put(r.step_size);
    out << ',';
    put(include_timing ? r.elapsed_ms : 0.0);
    out << '\n';
  }
}

TrainResult esh1_train(const RowMatrix& x, const Matrix& s,
                       const TrainConfig& config, const Matrix& w0) {
  validate(config, x.cols());
  TrainResult result;
  result.trace.alpha = resolve_alpha(config, w0, x, s);
  const double alpha = result.trace.alpha;

  Stopwatch clock;
  Matrix w = w0;
  Evaluation current = evaluate(w, x, s, alpha);
  result.trace.initial_loss = current.loss;
  result.trace.records.reserve(static_cast<std::size_t>(config.iterations));
  EarlyStop stop(config);

  for (int p = 1; p <= config.iterations; ++p) {
    w = stiefel_project(w - config.eta * current.gradient);
    const double previous = current.loss;
    current = evaluate(w, x, s, alpha);
    result.trace.records.push_back({p, current.loss, orthogonality_residual(w),
                                    config.eta, clock.elapsed_ms()});
    if (stop.update(previous, current.loss)) break;
  }
  result.w = std::move(w);
  return result;
}

TrainResult esh2_train(const RowMatrix& x, const Matrix& s,
                       const TrainConfig& config, const Matrix& w0) {
  validate(config, x.cols());
  TrainResult result;
  result.trace.alpha = resolve_alpha(config, w0, x, s);
  const double alpha = result.trace.alpha;

  Stopwatch clock;
  Matrix w = w0;
  Evaluation current = evaluate(w, x, s, alpha);
  Matrix tangent = tangent_gradient(w, current.gradient);
  result.trace.initial_loss = current.loss;
  result.trace.records.reserve(static_cast<std::size_t>(config.iterations));
  EarlyStop stop(config);

  double tau = config.tau0;
  for (int p = 1; p <= config.iterations; ++p) {
    Matrix next = cayley_step(w, current.gradient, tau);
    const double previous = current.loss;
    current = evaluate(next, x, s, alpha);
    Matrix next_tangent = tangent_gradient(next, current.gradient);
    result.trace.records.push_back({p, current.loss, orthogonality_residual(next),
                                    tau, clock.elapsed_ms()});

    if (auto step = bb_step(next - w, next_tangent - tangent)) tau = *step;
    w = std::move(next);
    tangent = std::move(next_tangent);
    if (stop.update(previous, current.loss)) break;
  }
  result.w = std::move(w);
  return result;
}

TrainResult train(const RowMatrix& x, const Matrix& s,
                  const TrainConfig& config) {
  validate(config, x.cols());
  const Matrix w0 = init_w(x.cols(), config.bits, config.seed);
  return config.algorithm == Algorithm::kEsh1 ? esh1_train(x, s, config, w0)
                                              : esh2_train(x, s, config, w0);
}

}  // namespace esh
