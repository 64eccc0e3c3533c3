#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "patchtrace/highlight.hpp"
#include "patchtrace/ranker.hpp"

namespace patchtrace::lime {

struct LimeConfig {
  std::size_t n_samples = 1000;
  double ridge_lambda = 1.0;
  double kernel_width = 0.25;  // cosine-distance units
  std::uint64_t seed = 0;
};

/// `base` with a seed derived from (base.seed, cve, commit, field), so an
/// explanation does not depend on the order examples are processed in.
LimeConfig for_example(const LimeConfig& base, std::string_view cve_id, std::string_view commit_id,
                       highlight::Field field);

/// One entry per feature; 1 keeps the token.
using Mask = std::vector<std::uint8_t>;

/// `n_samples` masks over `n_features` tokens. Mask 0 keeps everything;
/// every other mask drops a uniformly chosen count in [1, n_features] of
/// uniformly chosen tokens. Empty when n_features is 0.
std::vector<Mask> perturb(std::size_t n_features, const LimeConfig& config);

struct RidgeFit {
  Eigen::VectorXd coef;
  double intercept = 0;
};

/// Minimizes sum_i w_i (y_i - x_i.c - c0)^2 + lambda |c|^2 with the
/// intercept unpenalized, via the weighted normal equations on centred data.
RidgeFit fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double lambda);

/// exp(-d^2 / width^2), d = cosine distance between the mask and all-ones.
double proximity(const Mask& mask, double kernel_width);

enum class Selection {
  positive_only,  // up to k features with positive coefficients
  exact,          // exactly min(k, features) features, best coefficients first
};

struct Explanation {
  highlight::Highlight highlight;
  bool truncated = false;  // k exceeded the informative token count
};

/// Explains the label-1 score of one field. The message field is explained
/// on its full token list; the diff field on the commit's top chunk. The
/// CVE and the other field stay fixed. Features are the informative surface
/// tokens of the field. Item weights are refit coefficients clipped at 0.
Explanation explain(const rank::PreparedCve& cve, const rank::PreparedCommit& commit, highlight::Field field,
                    std::size_t k, const rank::Scorer& scorer, const LimeConfig& config,
                    Selection selection = Selection::positive_only);

}  // namespace patchtrace::lime
