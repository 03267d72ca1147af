#pragma once

#include "avishape/types.hpp"

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace avishape {

/// A named slice of the flat parameter vector.
struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  bool active = true;
  /// Multiplies the optimizer step for this block (per-block units differ:
  /// radians, world units, fractions of body length).
  double step_scale = 1.0;
};

/// Flat real vector with a disjoint, covering block layout. Frozen blocks
/// never change during minimization.
class ParamVector {
 public:
  /// Appends a block; names must be unique.
  void add_block(const std::string& name, const Eigen::VectorXd& init, bool active = true, double step_scale = 1.0);

  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  Eigen::Index size() const { return values_.size(); }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  bool has(const std::string& name) const;
  const ParamBlock& block(const std::string& name) const;
  Eigen::VectorXd::SegmentReturnType segment(const std::string& name);
  Eigen::VectorXd::ConstSegmentReturnType segment(const std::string& name) const;

  void set_active(const std::string& name, bool active);
  void set_all_active(bool active);
  void set_step_scale(const std::string& name, double scale);
  bool is_active(const std::string& name) const { return block(name).active; }

  /// 1 on active coordinates, 0 on frozen ones.
  Eigen::VectorXd active_mask() const;
  /// Per-coordinate step multipliers.
  Eigen::VectorXd step_scales() const;

 private:
  ParamBlock& find(const std::string& name);
  Eigen::VectorXd values_;
  std::vector<ParamBlock> blocks_;
};

/// Named energy contributions of one evaluation, in a fixed order.
using TermBreakdown = std::vector<std::pair<std::string, double>>;

/// Differentiable scalar objective over a ParamVector.
class Objective {
 public:
  virtual ~Objective() = default;
  /// Returns the value. If grad is given it has x.size() entries, is zeroed
  /// by the caller and must receive the analytic gradient. Terms, when
  /// given, receive the per-term breakdown.
  virtual double compute(const ParamVector& x, Eigen::VectorXd* grad, TermBreakdown* terms) = 0;
  /// Maps a trial point back onto the feasible set (positive scales,
  /// wrapped rotations). Default: identity.
  virtual void project(ParamVector&) const {}
};

struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;  // zero on frozen blocks
  TermBreakdown terms;
};

/// Value and gradient with frozen blocks zeroed. Throws NumericalError
/// naming the first non-finite term (or "gradient" for a non-finite
/// gradient entry and its block).
Evaluation evaluate(Objective& objective, const ParamVector& x);

enum class Algorithm { adam, lbfgs };

struct OptimConfig {
  Algorithm algorithm = Algorithm::adam;
  int max_iters = 200;
  double step = 0.01;
  /// Stop when the relative objective decrease over `window` iterations
  /// falls below this.
  double tolerance = 1e-6;
  int window = 10;
  /// Gradient norm clip (0 disables).
  double grad_clip = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int lbfgs_memory = 10;

  void validate() const;
};

struct TraceRow {
  int iter = 0;
  double value = 0.0;
  TermBreakdown terms;
};

struct MinimizeResult {
  ParamVector params;
  std::vector<TraceRow> trace;  // row 0 is the starting point
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Raised when the objective becomes non-finite; carries the last point
/// with a finite value for diagnosis.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, ParamVector last) : NumericalError(what), last_finite(std::move(last)) {}
  ParamVector last_finite;
};

/// Minimizes over the active blocks. Adam returns the best visited point;
/// L-BFGS uses Armijo backtracking so accepted values never increase.
/// Fully deterministic for identical inputs.
MinimizeResult minimize(Objective& objective, ParamVector params, const OptimConfig& config);

/// Trace as CSV: iter,objective,<term names...>.
std::string trace_csv(const std::vector<TraceRow>& trace);

}  // namespace avishape
