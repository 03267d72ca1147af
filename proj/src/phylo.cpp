#include "avishape/phylo.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>

namespace avishape {

std::vector<int> PhyloTree::leaves() const {
  std::vector<int> out;
  std::function<void(int)> walk = [&](int n) {
    if (is_leaf(n)) out.push_back(n);
    for (int c : nodes[n].children) walk(c);
  };
  if (!nodes.empty()) walk(0);
  return out;
}

std::vector<std::string> PhyloTree::leaf_names() const {
  std::vector<std::string> out;
  for (int l : leaves()) out.push_back(nodes[l].name);
  return out;
}

std::vector<int> PhyloTree::internal_nodes() const {
  std::vector<int> out;
  std::function<void(int)> walk = [&](int n) {
    if (is_leaf(n)) return;
    out.push_back(n);
    for (int c : nodes[n].children) walk(c);
  };
  if (!nodes.empty()) walk(0);
  return out;
}

double PhyloTree::depth(int n) const {
  double d = 0.0;
  for (; nodes[n].parent >= 0; n = nodes[n].parent) d += nodes[n].length;
  return d;
}

int PhyloTree::mrca(int a, int b) const {
  std::set<int> up;
  for (int n = a; n >= 0; n = nodes[n].parent) up.insert(n);
  for (int n = b; n >= 0; n = nodes[n].parent) {
    if (up.count(n)) return n;
  }
  throw InvalidInput("tree: nodes share no ancestor");
}

void PhyloTree::validate() const {
  if (nodes.empty()) throw InvalidInput("tree: empty");
  if (nodes[0].parent != -1) throw InvalidInput("tree: node 0 must be the root");
  std::set<std::string> names;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    if (!(n.length >= 0.0) || !std::isfinite(n.length)) {
      throw InvalidInput("tree: branch length of node " + std::to_string(i) + " must be finite and nonnegative");
    }
    if (i > 0 && (n.parent < 0 || n.parent >= static_cast<int>(nodes.size()))) {
      throw InvalidInput("tree: node " + std::to_string(i) + " has no valid parent");
    }
    if (n.children.size() == 1) throw InvalidInput("tree: node " + std::to_string(i) + " has a single child");
    if (n.children.empty()) {
      if (n.name.empty()) throw InvalidInput("tree: unlabeled leaf");
      if (!names.insert(n.name).second) throw InvalidInput("tree: duplicate leaf label '" + n.name + "'");
    }
  }
  if (leaves().size() < 2) throw InvalidInput("tree: needs at least 2 leaves");
}

// ---------------------------------------------------------------------------

namespace {

class NewickParser {
 public:
  explicit NewickParser(const std::string& s) : s_(s) {}

  PhyloTree parse() {
    skip();
    tree_.nodes.push_back({});
    subtree(0);
    skip();
    if (pos_ < s_.size() && s_[pos_] == ';') ++pos_;
    skip();
    if (pos_ != s_.size()) fail("trailing characters");
    tree_.nodes[0].length = 0.0;
    tree_.validate();
    return std::move(tree_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidInput("newick: " + what + " at offset " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  void subtree(int node) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      ++pos_;
      for (;;) {
        const int child = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back({});
        tree_.nodes[child].parent = node;
        tree_.nodes[node].children.push_back(child);
        subtree(child);
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        if (s_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (s_[pos_] == ')') {
          ++pos_;
          break;
        }
        fail("expected ',' or ')'");
      }
    }
    skip();
    tree_.nodes[node].name = label();
    skip();
    if (pos_ < s_.size() && s_[pos_] == ':') {
      ++pos_;
      skip();
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                  s_[pos_] == 'e' || s_[pos_] == 'E' || s_[pos_] == '-' || s_[pos_] == '+')) {
        ++pos_;
      }
      if (start == pos_) fail("missing branch length");
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s_.substr(start, pos_ - start), &used);
      } catch (const std::exception&) {
        fail("bad branch length");
      }
      if (used != pos_ - start) fail("bad branch length");
      if (v < 0.0) fail("negative branch length");
      tree_.nodes[node].length = v;
    }
  }
  std::string label() {
    std::string out;
    if (pos_ < s_.size() && s_[pos_] == '\'') {
      ++pos_;
      while (pos_ < s_.size() && s_[pos_] != '\'') out += s_[pos_++];
      if (pos_ >= s_.size()) fail("unterminated quoted label");
      ++pos_;
      return out;
    }
    while (pos_ < s_.size() && std::string("(),:;").find(s_[pos_]) == std::string::npos &&
           !std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      out += s_[pos_++];
    }
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  PhyloTree tree_;
};

std::string quote(const std::string& name) {
  std::string out = name;
  std::replace(out.begin(), out.end(), ' ', '_');
  if (out.find_first_of("(),:;'") != std::string::npos) return "'" + name + "'";
  return out;
}

}  // namespace

PhyloTree parse_newick(const std::string& text) { return NewickParser(text).parse(); }

std::string to_newick(const PhyloTree& tree) {
  tree.validate();
  char buf[64];
  std::function<std::string(int)> emit = [&](int n) {
    std::string s;
    const auto& node = tree.nodes[n];
    if (!node.children.empty()) {
      s += '(';
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        if (i) s += ',';
        s += emit(node.children[i]);
      }
      s += ')';
    }
    s += quote(node.name);
    if (n != 0) {
      std::snprintf(buf, sizeof buf, ":%.17g", node.length);
      s += buf;
    }
    return s;
  };
  return emit(0) + ";";
}

Eigen::MatrixXd shared_branch_matrix(const PhyloTree& tree) {
  tree.validate();
  const std::vector<int> lv = tree.leaves();
  const int s = static_cast<int>(lv.size());
  Eigen::MatrixXd C(s, s);
  for (int i = 0; i < s; ++i) {
    for (int j = i; j < s; ++j) C(i, j) = C(j, i) = tree.depth(tree.mrca(lv[i], lv[j]));
  }
  return C;
}

Eigen::MatrixXd traits_in_leaf_order(const PhyloTree& tree, const std::vector<std::string>& species,
                                     const Eigen::MatrixXd& traits) {
  if (static_cast<Eigen::Index>(species.size()) != traits.rows()) {
    throw InvalidInput("traits: species count does not match the trait rows");
  }
  std::map<std::string, int> row;
  for (std::size_t i = 0; i < species.size(); ++i) {
    if (!row.emplace(species[i], static_cast<int>(i)).second) {
      throw InvalidInput("traits: duplicate species '" + species[i] + "'");
    }
  }
  const auto names = tree.leaf_names();
  if (names.size() != species.size()) throw InvalidInput("traits: species set differs from the tree leaves");
  Eigen::MatrixXd out(traits.rows(), traits.cols());
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = row.find(names[i]);
    if (it == row.end()) throw InvalidInput("traits: tree leaf '" + names[i] + "' has no trait row");
    out.row(static_cast<Eigen::Index>(i)) = traits.row(it->second);
  }
  if (!out.allFinite()) throw InvalidInput("traits: values must be finite");
  return out;
}

namespace {

Eigen::MatrixXd lambda_cov(const Eigen::MatrixXd& C, double lambda) {
  Eigen::MatrixXd M = lambda * C;
  M.diagonal() = C.diagonal();
  return M;
}

// Profile log-likelihood given a factorized covariance.
double profile_ll(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& y) {
  const Eigen::Index s = y.size();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s);
  const Eigen::VectorXd ci1 = llt.solve(ones);
  const double mu = ci1.dot(y) / ci1.dot(ones);
  const Eigen::VectorXd r = y - mu * ones;
  const double q = r.dot(llt.solve(r));
  const double sigma2 = std::max(q / static_cast<double>(s), 1e-300);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(s) * std::log(2.0 * std::numbers::pi * sigma2) + logdet + static_cast<double>(s));
}

Eigen::LLT<Eigen::MatrixXd> factor(Eigen::MatrixXd M, bool* regularized) {
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 1e-150) return llt;
  M.diagonal().array() += 1e-10;
  if (regularized) *regularized = true;
  llt.compute(M);
  if (llt.info() != Eigen::Success) throw NumericalError("lambda: covariance is not positive definite");
  return llt;
}

}  // namespace

double lambda_log_likelihood(const Eigen::MatrixXd& C, const Eigen::VectorXd& y, double lambda) {
  return profile_ll(factor(lambda_cov(C, lambda), nullptr), y);
}

double chi2_sf_1(double x) { return x <= 0.0 ? 1.0 : std::erfc(std::sqrt(0.5 * x)); }

double chi2_sf_even(double x, int dof) {
  if (dof < 2 || dof % 2) throw InvalidInput("chi2_sf_even: dof must be even and positive");
  if (x <= 0.0) return 1.0;
  const double h = 0.5 * x;
  double term = 1.0, sum = 1.0;
  for (int j = 1; j < dof / 2; ++j) {
    term *= h / j;
    sum += term;
  }
  return std::min(1.0, std::exp(-h) * sum);
}

double fisher_combine(const std::vector<double>& p) {
  if (p.empty()) throw InvalidInput("fisher_combine: no p-values");
  double x = 0.0;
  for (double v : p) x += -2.0 * std::log(std::max(v, 1e-300));
  return chi2_sf_even(x, 2 * static_cast<int>(p.size()));
}

LambdaResult pagels_lambda(const PhyloTree& tree, const Eigen::MatrixXd& traits) {
  const Eigen::MatrixXd C = shared_branch_matrix(tree);
  const Eigen::Index s = C.rows();
  if (s < 4) throw InvalidInput("pagels_lambda: needs at least 4 species");
  if (traits.rows() != s) throw InvalidInput("pagels_lambda: trait rows do not match the tree leaves");
  if (traits.cols() < 1) throw InvalidInput("pagels_lambda: no trait dimensions");
  if (!traits.allFinite()) throw InvalidInput("pagels_lambda: traits must be finite");
  LambdaResult out;
  Eigen::MatrixXd off = C;
  off.diagonal().setZero();
  const bool star = off.cwiseAbs().maxCoeff() == 0.0;

  bool regularized = false;
  std::map<double, Eigen::LLT<Eigen::MatrixXd>> cache;
  auto llt_at = [&](double lambda) -> const Eigen::LLT<Eigen::MatrixXd>& {
    auto it = cache.find(lambda);
    if (it == cache.end()) it = cache.emplace(lambda, factor(lambda_cov(C, lambda), &regularized)).first;
    return it->second;
  };

  for (Eigen::Index d = 0; d < traits.cols(); ++d) {
    const Eigen::VectorXd y = traits.col(d);
    LambdaFit f;
    const bool constant = (y.array() - y.mean()).abs().maxCoeff() <= 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff());
    if (star || constant) {
      out.per_dim.push_back(f);
      continue;
    }
    auto ll = [&](double l) { return profile_ll(llt_at(l), y); };
    // golden-section search for the maximum on [0, 1]
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = 0.0, b = 1.0;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double f1 = ll(x1), f2 = ll(x2);
    while (b - a > 1e-4) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + g * (b - a);
        f2 = ll(x2);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - g * (b - a);
        f1 = ll(x1);
      }
    }
    double best = 0.5 * (a + b), best_ll = ll(best);
    f.log_likelihood_0 = ll(0.0);
    const double ll1 = ll(1.0);
    if (f.log_likelihood_0 >= best_ll) {
      best = 0.0;
      best_ll = f.log_likelihood_0;
    }
    if (ll1 > best_ll) {
      best = 1.0;
      best_ll = ll1;
    }
    f.lambda = best;
    f.log_likelihood = best_ll;
    f.p_value = chi2_sf_1(2.0 * (best_ll - f.log_likelihood_0));
    out.per_dim.push_back(f);
    cache.clear();
  }
  if (regularized) out.warnings.push_back("singular lambda covariance regularized by 1e-10 on the diagonal");
  std::vector<double> ps;
  for (const auto& f : out.per_dim) {
    out.mean_lambda += f.lambda;
    ps.push_back(f.p_value);
  }
  out.mean_lambda /= static_cast<double>(out.per_dim.size());
  out.combined_p = fisher_combine(ps);
  return out;
}

Eigen::MatrixXd ancestral_states(const PhyloTree& tree, const Eigen::MatrixXd& traits) {
  const Eigen::MatrixXd C = shared_branch_matrix(tree);
  const std::vector<int> lv = tree.leaves();
  const std::vector<int> in = tree.internal_nodes();
  if (traits.rows() != static_cast<Eigen::Index>(lv.size())) {
    throw InvalidInput("ancestral_states: trait rows do not match the tree leaves");
  }
  if (!traits.allFinite()) throw InvalidInput("ancestral_states: traits must be finite");
  const Eigen::LLT<Eigen::MatrixXd> llt = factor(C, nullptr);
  const Eigen::Index s = C.rows();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s);
  const Eigen::VectorXd ci1 = llt.solve(ones);
  Eigen::MatrixXd Cal(in.size(), s);
  for (std::size_t a = 0; a < in.size(); ++a) {
    for (Eigen::Index l = 0; l < s; ++l) Cal(a, l) = tree.depth(tree.mrca(in[a], lv[l]));
  }
  Eigen::MatrixXd out(in.size(), traits.cols());
  for (Eigen::Index d = 0; d < traits.cols(); ++d) {
    const Eigen::VectorXd y = traits.col(d);
    const double mu = ci1.dot(y) / ci1.dot(ones);
    out.col(d) = Eigen::VectorXd::Constant(in.size(), mu) + Cal * llt.solve(y - mu * ones);
  }
  return out;
}

Eigen::MatrixXd embed_2d(const Eigen::MatrixXd& traits) {
  if (traits.rows() < 2) throw InvalidInput("embed_2d: needs at least 2 rows");
  if (!traits.allFinite()) throw InvalidInput("embed_2d: traits must be finite");
  const Eigen::MatrixXd X = traits.rowwise() - traits.colwise().mean();
  const Eigen::MatrixXd cov = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(traits.rows(), 2);
  const Eigen::Index d = cov.rows();
  for (int k = 0; k < 2 && k < d; ++k) {
    Eigen::VectorXd axis = es.eigenvectors().col(d - 1 - k);
    Eigen::Index imax = 0;
    axis.cwiseAbs().maxCoeff(&imax);
    if (axis[imax] < 0.0) axis = -axis;
    out.col(k) = X * axis;
  }
  return out;
}

PhyloTree random_tree(int n, std::uint64_t seed) {
  if (n < 2) throw InvalidInput("random_tree: needs at least 2 leaves");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> wait(1.0);
  PhyloTree t;
  t.nodes.push_back({});
  // coalescent intervals read forward in time: with k lineages the waiting
  // time is exponential with rate k(k-1)/2; a uniformly chosen tip splits
  std::vector<int> tips{0};
  auto grow = [&] {
    const double k = static_cast<double>(tips.size());
    const double dt = wait(rng) / (0.5 * k * (k - 1.0));
    for (int k : tips) t.nodes[k].length += dt;
  };
  while (static_cast<int>(tips.size()) < n) {
    if (tips.size() > 1) grow();
    std::uniform_int_distribution<std::size_t> pick(0, tips.size() - 1);
    const std::size_t k = pick(rng);
    const int p = tips[k];
    for (int c = 0; c < 2; ++c) {
      PhyloTree::Node node;
      node.parent = p;
      t.nodes[p].children.push_back(static_cast<int>(t.nodes.size()));
      t.nodes.push_back(node);
    }
    tips.erase(tips.begin() + static_cast<std::ptrdiff_t>(k));
    tips.push_back(t.nodes[p].children[0]);
    tips.push_back(t.nodes[p].children[1]);
  }
  grow();
  const std::vector<int> lv = t.leaves();
  for (std::size_t i = 0; i < lv.size(); ++i) t.nodes[lv[i]].name = "t" + std::to_string(i);
  t.validate();
  return t;
}

Eigen::MatrixXd simulate_bm(const PhyloTree& tree, int dims, std::uint64_t seed) {
  tree.validate();
  if (dims < 1) throw InvalidInput("simulate_bm: dims must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd state = Eigen::MatrixXd::Zero(tree.nodes.size(), dims);
  std::function<void(int)> walk = [&](int n) {
    for (int c : tree.nodes[n].children) {
      for (int d = 0; d < dims; ++d) state(c, d) = state(n, d) + std::sqrt(tree.nodes[c].length) * normal(rng);
      walk(c);
    }
  };
  walk(0);
  const std::vector<int> lv = tree.leaves();
  Eigen::MatrixXd out(lv.size(), dims);
  for (std::size_t i = 0; i < lv.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = state.row(lv[i]);
  return out;
}

}  // namespace avishape
