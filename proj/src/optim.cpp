#include "avishape/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <sstream>

namespace avishape {

void ParamVector::add_block(const std::string& name, const Eigen::VectorXd& init, bool active, double step_scale) {
  if (has(name)) throw InvalidInput("param vector: duplicate block '" + name + "'");
  ParamBlock b{name, values_.size(), init.size(), active, step_scale};
  Eigen::VectorXd grown(values_.size() + init.size());
  grown << values_, init;
  values_ = std::move(grown);
  blocks_.push_back(std::move(b));
}

bool ParamVector::has(const std::string& name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const ParamBlock& b) { return b.name == name; });
}

const ParamBlock& ParamVector::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw InvalidInput("param vector: no block named '" + name + "'");
}

ParamBlock& ParamVector::find(const std::string& name) {
  return const_cast<ParamBlock&>(static_cast<const ParamVector*>(this)->block(name));
}

Eigen::VectorXd::SegmentReturnType ParamVector::segment(const std::string& name) {
  const ParamBlock& b = block(name);
  return values_.segment(b.offset, b.size);
}

Eigen::VectorXd::ConstSegmentReturnType ParamVector::segment(const std::string& name) const {
  const ParamBlock& b = block(name);
  return values_.segment(b.offset, b.size);
}

void ParamVector::set_active(const std::string& name, bool active) { find(name).active = active; }

void ParamVector::set_all_active(bool active) {
  for (auto& b : blocks_) b.active = active;
}

void ParamVector::set_step_scale(const std::string& name, double scale) {
  if (!(scale > 0.0)) throw InvalidInput("param vector: step scale must be positive");
  find(name).step_scale = scale;
}

Eigen::VectorXd ParamVector::active_mask() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(values_.size());
  for (const auto& b : blocks_) {
    if (b.active) m.segment(b.offset, b.size).setOnes();
  }
  return m;
}

Eigen::VectorXd ParamVector::step_scales() const {
  Eigen::VectorXd m = Eigen::VectorXd::Ones(values_.size());
  for (const auto& b : blocks_) m.segment(b.offset, b.size).setConstant(b.step_scale);
  return m;
}

Evaluation evaluate(Objective& objective, const ParamVector& x) {
  if (!x.values().allFinite()) throw NumericalError("evaluate: parameters are not finite");
  Evaluation e;
  e.gradient = Eigen::VectorXd::Zero(x.size());
  e.value = objective.compute(x, &e.gradient, &e.terms);
  for (const auto& [name, v] : e.terms) {
    if (!std::isfinite(v)) throw NumericalError("evaluate: term '" + name + "' is not finite");
  }
  if (!std::isfinite(e.value)) throw NumericalError("evaluate: objective is not finite");
  e.gradient.array() *= x.active_mask().array();
  if (!e.gradient.allFinite()) {
    for (const auto& b : x.blocks()) {
      if (!e.gradient.segment(b.offset, b.size).allFinite()) {
        throw NumericalError("evaluate: gradient of block '" + b.name + "' is not finite");
      }
    }
  }
  return e;
}

void OptimConfig::validate() const {
  if (max_iters < 0) throw InvalidInput("optim: max_iters must be nonnegative");
  if (!(step > 0.0)) throw InvalidInput("optim: step must be positive");
  if (!(tolerance >= 0.0)) throw InvalidInput("optim: tolerance must be nonnegative");
  if (window < 1) throw InvalidInput("optim: window must be at least 1");
  if (!(grad_clip >= 0.0)) throw InvalidInput("optim: grad_clip must be nonnegative");
  if (lbfgs_memory < 1) throw InvalidInput("optim: lbfgs_memory must be at least 1");
}

namespace {

// Relative decrease over the last `window` iterations. `best` holds the
// running minimum of the trace so that Adam's transient increases are not
// read as convergence.
bool stalled(const std::vector<double>& best, const OptimConfig& c) {
  const auto n = static_cast<int>(best.size());
  if (n <= c.window) return false;
  const double old = best[n - 1 - c.window];
  const double now = best[n - 1];
  const double denom = std::max(std::abs(old), std::numeric_limits<double>::min());
  return (old - now) / denom < c.tolerance;
}

void clip(Eigen::VectorXd& g, double limit) {
  if (limit <= 0.0) return;
  const double n = g.norm();
  if (n > limit) g *= limit / n;
}

// Evaluates, turning a NumericalError into a DivergenceError that keeps the
// last finite state.
Evaluation guarded(Objective& obj, const ParamVector& x, const ParamVector& last_good) {
  try {
    return evaluate(obj, x);
  } catch (const DivergenceError&) {
    throw;
  } catch (const NumericalError& e) {
    throw DivergenceError(std::string("minimize diverged: ") + e.what(), last_good);
  }
}

MinimizeResult run_adam(Objective& obj, ParamVector x, const OptimConfig& c) {
  MinimizeResult r;
  const Eigen::VectorXd mask = x.active_mask();
  const Eigen::VectorXd scales = x.step_scales().cwiseProduct(mask);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(x.size()), v = Eigen::VectorXd::Zero(x.size());
  Evaluation e = guarded(obj, x, x);
  r.trace.push_back({0, e.value, e.terms});
  ParamVector best = x;
  double best_value = e.value;
  std::vector<double> best_trace{e.value};
  double b1t = 1.0, b2t = 1.0;
  for (int it = 1; it <= c.max_iters; ++it) {
    Eigen::VectorXd g = e.gradient;
    clip(g, c.grad_clip);
    m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * g;
    v = c.adam_beta2 * v + (1.0 - c.adam_beta2) * g.cwiseAbs2();
    b1t *= c.adam_beta1;
    b2t *= c.adam_beta2;
    const Eigen::VectorXd mh = m / (1.0 - b1t);
    const Eigen::VectorXd vh = v / (1.0 - b2t);
    ParamVector next = x;
    next.values().array() -= c.step * scales.array() * mh.array() / (vh.array().sqrt() + c.adam_eps);
    obj.project(next);
    e = guarded(obj, next, best);
    x = std::move(next);
    r.trace.push_back({it, e.value, e.terms});
    r.iterations = it;
    if (e.value < best_value) {
      best_value = e.value;
      best = x;
    }
    best_trace.push_back(best_value);
    if (stalled(best_trace, c)) {
      r.converged = true;
      break;
    }
  }
  r.params = std::move(best);
  r.value = best_value;
  return r;
}

MinimizeResult run_lbfgs(Objective& obj, ParamVector x, const OptimConfig& c) {
  MinimizeResult r;
  const Eigen::VectorXd mask = x.active_mask();
  const Eigen::VectorXd scales = x.step_scales().cwiseProduct(mask);
  Evaluation e = guarded(obj, x, x);
  r.trace.push_back({0, e.value, e.terms});
  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;
  std::vector<double> values{e.value};
  for (int it = 1; it <= c.max_iters; ++it) {
    Eigen::VectorXd g = e.gradient;
    clip(g, c.grad_clip);
    if (g.squaredNorm() == 0.0) {
      r.converged = true;
      break;
    }
    // two-loop recursion in the step-scaled coordinates
    Eigen::VectorXd q = g.cwiseProduct(scales);
    std::vector<double> a(S.size());
    for (int k = static_cast<int>(S.size()) - 1; k >= 0; --k) {
      a[k] = rho[k] * S[k].dot(q);
      q -= a[k] * Y[k];
    }
    double gamma = 1.0;
    if (!S.empty()) gamma = S.back().dot(Y.back()) / Y.back().squaredNorm();
    Eigen::VectorXd d = gamma * q;
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double b = rho[k] * Y[k].dot(d);
      d += (a[k] - b) * S[k];
    }
    d = -d.cwiseProduct(scales);  // back to parameter coordinates
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      S.clear();
      Y.clear();
      rho.clear();
      d = -g.cwiseProduct(scales).cwiseProduct(scales);
      slope = g.dot(d);
    }
    double t = S.empty() ? std::min(1.0, c.step / std::max(d.cwiseAbs().maxCoeff(), 1e-300)) : 1.0;
    bool accepted = false;
    ParamVector trial = x;
    Evaluation et;
    for (int ls = 0; ls < 40; ++ls) {
      trial = x;
      trial.values() += t * d;
      obj.project(trial);
      try {
        et = evaluate(obj, trial);
        if (et.value <= e.value + 1e-4 * t * slope) {
          accepted = true;
          break;
        }
      } catch (const NumericalError&) {
        // treat as a failed trial and backtrack
      }
      t *= 0.5;
    }
    if (!accepted) {
      r.converged = true;  // no descent possible at machine precision
      break;
    }
    const Eigen::VectorXd s = (trial.values() - x.values()).cwiseQuotient(scales.cwiseMax(1e-300)).cwiseProduct(mask);
    const Eigen::VectorXd y = (et.gradient - e.gradient).cwiseProduct(scales);
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > c.lbfgs_memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
    }
    x = std::move(trial);
    e = std::move(et);
    r.trace.push_back({it, e.value, e.terms});
    r.iterations = it;
    values.push_back(e.value);
    if (stalled(values, c)) {
      r.converged = true;
      break;
    }
  }
  r.params = std::move(x);
  r.value = e.value;
  return r;
}

}  // namespace

MinimizeResult minimize(Objective& objective, ParamVector params, const OptimConfig& config) {
  config.validate();
  return config.algorithm == Algorithm::adam ? run_adam(objective, std::move(params), config)
                                             : run_lbfgs(objective, std::move(params), config);
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "iter,objective";
  if (!trace.empty()) {
    for (const auto& t : trace.front().terms) out << ',' << t.first;
  }
  out << '\n';
  char buf[64];
  for (const auto& row : trace) {
    out << row.iter;
    std::snprintf(buf, sizeof buf, ",%.17g", row.value);
    out << buf;
    for (const auto& t : row.terms) {
      std::snprintf(buf, sizeof buf, ",%.17g", t.second);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace avishape
