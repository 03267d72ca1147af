#include "doctest.h"

#include "avishape/optim.hpp"

#include <cmath>
#include <functional>

using namespace avishape;

namespace {

class FnObjective : public Objective {
 public:
  using Fn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;
  explicit FnObjective(Fn f) : f_(std::move(f)) {}
  double compute(const ParamVector& x, Eigen::VectorXd* g, TermBreakdown* terms) override {
    const double v = f_(x.values(), g);
    if (terms) terms->push_back({"f", v});
    return v;
  }

 private:
  Fn f_;
};

double sq(const Eigen::VectorXd& x, Eigen::VectorXd* g) {
  if (g) *g += 2 * x;
  return x.squaredNorm();
}

double rosenbrock(const Eigen::VectorXd& x, Eigen::VectorXd* g) {
  const double a = 1, b = 100;
  const double u = a - x[0], w = x[1] - x[0] * x[0];
  if (g) {
    (*g)[0] += -2 * u - 4 * b * x[0] * w;
    (*g)[1] += 2 * b * w;
  }
  return u * u + b * w * w;
}

}  // namespace

TEST_CASE("evaluate returns value and gradient, zeroing frozen blocks") {
  FnObjective obj(sq);
  ParamVector p;
  p.add_block("a", Eigen::Vector2d(3, 4));
  const Evaluation e = evaluate(obj, p);
  CHECK(e.value == 25.0);
  CHECK(e.gradient == Eigen::Vector2d(6, 8));
  p.add_block("b", Eigen::Vector2d(1, 1), false);
  const Evaluation e2 = evaluate(obj, p);
  CHECK(e2.gradient.tail(2) == Eigen::Vector2d::Zero());
  CHECK_THROWS_AS(p.add_block("a", Eigen::Vector2d::Zero()), InvalidInput);
}

TEST_CASE("evaluate reports the first non-finite term") {
  class Bad : public Objective {
   public:
    double compute(const ParamVector&, Eigen::VectorXd*, TermBreakdown* t) override {
      if (t) t->assign({{"fine", 1.0}, {"mask", NAN}});
      return NAN;
    }
  } bad;
  ParamVector p;
  p.add_block("x", Eigen::Vector2d::Ones());
  try {
    evaluate(bad, p);
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("mask") != std::string::npos);
  }
}

TEST_CASE("quadratic bowl converges from (10, 10)") {
  for (Algorithm alg : {Algorithm::lbfgs, Algorithm::adam}) {
    FnObjective obj(sq);
    ParamVector p;
    p.add_block("x", Eigen::Vector2d(10, 10));
    OptimConfig c;
    c.algorithm = alg;
    c.max_iters = 199;
    c.tolerance = 0;
    if (alg == Algorithm::adam) {
      // fixed-step first-order method: accuracy is limited by the step
      c.step = 0.05;
      c.max_iters = 3000;
    }
    const auto r = minimize(obj, p, c);
    if (alg == Algorithm::lbfgs) {
      CHECK(r.params.values().norm() < 1e-6);
      CHECK(r.iterations < 200);
    } else {
      CHECK(r.params.values().norm() < 0.05);
    }
  }
}

TEST_CASE("Rosenbrock from (-1.2, 1)") {
  FnObjective obj(rosenbrock);
  ParamVector p;
  p.add_block("x", Eigen::Vector2d(-1.2, 1));
  OptimConfig c;
  c.algorithm = Algorithm::lbfgs;
  c.max_iters = 500;
  c.step = 0.5;
  c.tolerance = 0;
  const auto r = minimize(obj, p, c);
  CHECK(r.value < 1e-6);
  CHECK((r.params.values() - Eigen::Vector2d(1, 1)).norm() < 1e-2);
  for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].value <= r.trace[i - 1].value);
}

TEST_CASE("frozen blocks never change and reruns are bit-identical") {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const Eigen::VectorXd t = x - Eigen::VectorXd::LinSpaced(x.size(), -1, 1);
    if (g) *g += 4 * t.array().cube().matrix() + 2 * t;
    return t.array().pow(4).sum() + t.squaredNorm();
  };
  for (Algorithm alg : {Algorithm::adam, Algorithm::lbfgs}) {
    ParamVector p;
    p.add_block("free", Eigen::VectorXd::Constant(4, 0.3));
    p.add_block("fixed", Eigen::VectorXd::Constant(3, 0.7), false);
    OptimConfig c;
    c.algorithm = alg;
    c.max_iters = 50;
    FnObjective o1(f), o2(f);
    const auto a = minimize(o1, p, c);
    const auto b = minimize(o2, p, c);
    CHECK(a.params.segment("fixed") == p.segment("fixed"));
    CHECK(a.params.segment("free") != p.segment("free"));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].value == b.trace[i].value);
    CHECK(a.params.values() == b.params.values());
  }
}

TEST_CASE("divergence reports the last finite state") {
  auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (x[0] < -0.5) return std::numeric_limits<double>::quiet_NaN();
    if (g) (*g)[0] += 1.0;
    return x[0];
  };
  FnObjective obj(f);
  ParamVector p;
  p.add_block("x", Eigen::VectorXd::Zero(1));
  OptimConfig c;
  c.step = 0.1;
  c.max_iters = 100;
  try {
    minimize(obj, p, c);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.last_finite.values()[0] >= -0.5);
    CHECK(e.last_finite.values()[0] < 0.0);
  }
}

TEST_CASE("trace csv") {
  std::vector<TraceRow> t{{0, 1.5, {{"kp", 1.0}, {"mask", 0.5}}}, {1, 0.25, {{"kp", 0.2}, {"mask", 0.05}}}};
  CHECK(trace_csv(t) == "iter,objective,kp,mask\n0,1.5,1,0.5\n1,0.25,0.20000000000000001,0.050000000000000003\n");
}
