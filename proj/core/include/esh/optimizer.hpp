#pragma once

#include "esh/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace esh {

/// How sgn treats exact zeros. The gradient path maps 0 to 0 (the
/// regularizer has zero derivative there); encoding maps 0 to +1.
enum class ZeroRule { kZero, kPositive };

Matrix sgn(const Matrix& m, ZeroRule rule);

/// ||W^T W - I||_inf (largest absolute entry).
double orthogonality_residual(const Matrix& w);

/// Seeded Gaussian d x k matrix projected onto the Stiefel manifold.
Matrix init_w(Index d, Index k, std::uint64_t seed);

/// The two parts of the relaxed objective at W, without the alpha weight:
///   trace_term   = -(1/n) Tr(W^T S W)
///   quantization =  (1/n) || |XW| - 1 ||_F^2
/// so that loss = trace_term + (alpha / 2) * quantization.
struct LossTerms {
  double trace_term = 0.0;
  double quantization = 0.0;
};

LossTerms loss_terms(const Matrix& w, const RowMatrix& x, const Matrix& s);

double loss(const Matrix& w, const RowMatrix& x, const Matrix& s,
            double alpha);

/// G = -(2/n) S W + (alpha/n) X^T (XW - sgn(XW)), sgn(0) = 0.
Matrix gradient(const Matrix& w, const RowMatrix& x, const Matrix& s,
                double alpha);

struct Evaluation {
  double loss = 0.0;
  Matrix gradient;
};

/// Loss and gradient sharing one XW product.
Evaluation evaluate(const Matrix& w, const RowMatrix& x, const Matrix& s,
                    double alpha);

/// Regularization weight that balances both objective parts at W0:
/// |trace_term| = (alpha/2) * quantization. Throws kDegenerate when the
/// quantization part vanishes (XW0 already exactly +-1).
double auto_alpha(const Matrix& w0, const RowMatrix& x, const Matrix& s);

/// Nearest matrix with orthonormal columns in Frobenius norm, U V^T from the
/// thin SVD. Throws kRankDeficient when the smallest singular value < 1e-12.
Matrix stiefel_project(const Matrix& w);

/// G - W G^T W.
Matrix tangent_gradient(const Matrix& w, const Matrix& g);

/// Crank-Nicolson update along the skew matrix F = G W^T - W G^T:
///   Y = (I + tau/2 F)^{-1} (I - tau/2 F) W,
/// solved as a d x d system with partial pivoting.
Matrix cayley_step(const Matrix& w, const Matrix& g, double tau);

inline constexpr double kTauMin = 1e-10;
inline constexpr double kTauMax = 1e3;

/// Barzilai-Borwein step |Tr(M^T Y)| / Tr(Y^T Y), clamped to
/// [kTauMin, kTauMax]. Empty when Y is numerically zero; the caller keeps
/// its previous step.
std::optional<double> bb_step(const Matrix& m, const Matrix& ydiff);

enum class Algorithm { kEsh1, kEsh2 };

struct TrainConfig {
  Index bits = 16;
  int iterations = 300;
  double eta = 0.01;
  std::optional<double> alpha;  // empty = automatic
  double tau0 = 0.01;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::kEsh2;
  // Optional stop when the relative loss change stays below the tolerance
  // for a window of consecutive iterations.
  bool early_stop = false;
  double early_stop_tol = 1e-7;
  int early_stop_window = 10;
};

/// Throws kInvalidArgument for k > d, N < 1, eta < 0 or tau0 < 0.
void validate(const TrainConfig& config, Index dims);

struct TraceRecord {
  int iteration = 0;       // 1-based
  double loss = 0.0;       // objective at the iterate produced this step
  double orth_residual = 0.0;
  double step_size = 0.0;  // eta for ESH1, tau used by the update for ESH2
  double elapsed_ms = 0.0;
};

struct TrainTrace {
  double alpha = 0.0;
  double initial_loss = 0.0;
  std::vector<TraceRecord> records;
};

/// CSV with header iteration,loss,orth_residual,step_size,elapsed_ms.
/// Without timing the elapsed column is written as 0 so that the file is a
/// pure function of the inputs.
void write_trace_csv(std::ostream& out, const TrainTrace& trace,
                     bool include_timing);

struct TrainResult {
  Matrix w;
  TrainTrace trace;
};

/// Projected gradient: W <- Proj(W - eta G) for N iterations.
TrainResult esh1_train(const RowMatrix& x, const Matrix& s,
                       const TrainConfig& config, const Matrix& w0);
/// Cayley updates with Barzilai-Borwein steps on the tangent gradient.
TrainResult esh2_train(const RowMatrix& x, const Matrix& s,
                       const TrainConfig& config, const Matrix& w0);

/// Seeds W0 from config.seed, resolves alpha, dispatches on the algorithm.
TrainResult train(const RowMatrix& x, const Matrix& s,
                  const TrainConfig& config);

}  // namespace esh
