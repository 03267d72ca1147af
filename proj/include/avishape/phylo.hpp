#pragma once

#include "avishape/types.hpp"

#include <Eigen/Core>

#include <cstdint>

#include <string>
#include <vector>

namespace avishape {

/// Rooted tree with branch lengths. Node 0 is the root; leaves carry unique
/// labels. Internal nodes may have two or more children.
struct PhyloTree {
  struct Node {
    std::string name;
    int parent = -1;
    double length = 0.0;  // branch to the parent
    std::vector<int> children;
  };
  std::vector<Node> nodes;

  bool is_leaf(int n) const { return nodes[n].children.empty(); }
  /// Leaf node indices in order of appearance.
  std::vector<int> leaves() const;
  std::vector<std::string> leaf_names() const;
  /// Internal node indices in preorder (root first).
  std::vector<int> internal_nodes() const;
  /// Path length from the root (the root's own branch is ignored).
  double depth(int n) const;
  int mrca(int a, int b) const;
  void validate() const;
};

/// Parses "(A:1,(B:2,C:2)x:1);". Missing lengths read as 0; a length on the
/// root is ignored. Throws InvalidInput with the character offset on error.
PhyloTree parse_newick(const std::string& text);
std::string to_newick(const PhyloTree& tree);

/// S x S shared branch length matrix in leaf order: C_ij = depth(mrca(i, j)).
Eigen::MatrixXd shared_branch_matrix(const PhyloTree& tree);

/// Reorders the rows of a species x D trait matrix into tree leaf order.
/// The species set must equal the leaf set.
Eigen::MatrixXd traits_in_leaf_order(const PhyloTree& tree, const std::vector<std::string>& species,
                                     const Eigen::MatrixXd& traits);

/// Profile log-likelihood of one trait (leaf order) under Brownian motion
/// with covariance C(lambda) = lambda C + (1 - lambda) diag(C).
double lambda_log_likelihood(const Eigen::MatrixXd& C, const Eigen::VectorXd& y, double lambda);

struct LambdaFit {
  double lambda = 0.0;
  double log_likelihood = 0.0;
  double log_likelihood_0 = 0.0;
  double p_value = 1.0;
};

struct LambdaResult {
  std::vector<LambdaFit> per_dim;
  double mean_lambda = 0.0;
  double combined_p = 1.0;  // Fisher
  std::vector<std::string> warnings;
};

/// Per-dimension ML lambda on [0, 1] (golden section to 1e-4 plus both
/// endpoints), likelihood-ratio test against lambda = 0 (chi-square, 1 df),
/// pooled as the mean lambda and the Fisher-combined p. Traits are in leaf
/// order. A tree without shared branches, or a constant trait, gives
/// lambda 0 and p 1.
LambdaResult pagels_lambda(const PhyloTree& tree, const Eigen::MatrixXd& traits);

/// Upper tail of the chi-square distribution with one degree of freedom.
double chi2_sf_1(double x);
/// Upper tail of the chi-square distribution with an even number of
/// degrees of freedom.
double chi2_sf_even(double x, int dof);
/// -2 sum log p, referred to chi-square with 2k degrees of freedom.
double fisher_combine(const std::vector<double>& p);

/// Maximum-likelihood Brownian-motion states of the internal nodes (rows in
/// internal_nodes() order), given leaf-ordered traits.
Eigen::MatrixXd ancestral_states(const PhyloTree& tree, const Eigen::MatrixXd& traits);

/// Centered projection onto the top two principal axes, each axis signed so
/// that its largest-magnitude loading is positive. Needs S >= 2.
Eigen::MatrixXd embed_2d(const Eigen::MatrixXd& traits);

/// Random ultrametric coalescent tree (Kingman, unit rate) with n labeled leaves
/// ("t0".."t{n-1}"). Deterministic in seed.
PhyloTree random_tree(int n, std::uint64_t seed);
/// Brownian-motion traits in leaf order: D independent dimensions, unit rate.
Eigen::MatrixXd simulate_bm(const PhyloTree& tree, int dims, std::uint64_t seed);

}  // namespace avishape
