#include "patchtrace/lime.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace patchtrace::lime {

using highlight::Field;
using text::TokenSpan;

LimeConfig for_example(const LimeConfig& base, std::string_view cve_id, std::string_view commit_id, Field field) {
  // FNV-1a over the key, then a splitmix64 finalizer.
  std::uint64_t h = 1469598103934665603ULL ^ base.seed;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  };
  mix(cve_id);
  mix(commit_id);
  mix(highlight::to_string(field));
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  auto cfg = base;
  cfg.seed = h ^ (h >> 31);
  return cfg;
}

std::vector<Mask> perturb(std::size_t n_features, const LimeConfig& config) {
  std::vector<Mask> masks;
  if (n_features == 0 || config.n_samples == 0) return masks;
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> drop_count(1, n_features);
  std::vector<std::size_t> order(n_features);
  masks.emplace_back(n_features, std::uint8_t{1});
  for (std::size_t s = 1; s < config.n_samples; ++s) {
    const std::size_t drop = drop_count(rng);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `drop` slots become a uniform subset.
    for (std::size_t i = 0; i < drop; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_features - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    Mask m(n_features, std::uint8_t{1});
    for (std::size_t i = 0; i < drop; ++i) m[order[i]] = 0;
    masks.push_back(std::move(m));
  }
  return masks;
}

RidgeFit fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double lambda) {
  const double wsum = w.sum();
  const Eigen::RowVectorXd x_mean = (w.transpose() * X) / wsum;
  const double y_mean = w.dot(y) / wsum;
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  Eigen::MatrixXd gram = Xc.transpose() * w.asDiagonal() * Xc;
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = Xc.transpose() * (w.asDiagonal() * yc);
  RidgeFit fit;
  fit.coef = gram.ldlt().solve(rhs);
  fit.intercept = y_mean - x_mean.dot(fit.coef);
  return fit;
}

double proximity(const Mask& mask, double kernel_width) {
  const auto kept = static_cast<double>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
  const auto total = static_cast<double>(mask.size());
  if (total == 0) return 1.0;
  // cos(mask, ones) = kept / (sqrt(kept) * sqrt(total))
  const double d = 1.0 - std::sqrt(kept / total);
  return std::exp(-(d * d) / (kernel_width * kernel_width));
}

Explanation explain(const rank::PreparedCve& cve, const rank::PreparedCommit& commit, Field field, std::size_t k,
                    const rank::Scorer& scorer, const LimeConfig& config, Selection selection) {
  Explanation out;
  out.highlight.field = field;
  out.highlight.method = highlight::Method::lime;

  const std::span<const TokenSpan> msg = commit.message_tokens;
  const std::span<const TokenSpan> chunk = commit.top_chunk_tokens();
  const std::span<const TokenSpan> tokens = field == Field::message ? msg : chunk;

  // Feature j -> index of an informative surface token in `tokens`.
  std::vector<std::size_t> features;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].origin == text::Origin::surface && text::is_informative(tokens[i].text)) features.push_back(i);
  }
  const std::size_t T = features.size();
  if (k > T) {
    out.truncated = true;
    k = T;
  }
  if (k == 0 || T == 0) return out;

  const auto masks = perturb(T, config);
  const std::size_t n = masks.size();
  std::vector<long> feature_of_ordinal;
  {
    std::size_t max_ordinal = 0;
    for (const auto& t : tokens) max_ordinal = std::max(max_ordinal, t.surface_index);
    feature_of_ordinal.assign(max_ordinal + 1, -1);
    for (std::size_t j = 0; j < T; ++j) feature_of_ordinal[tokens[features[j]].surface_index] = static_cast<long>(j);
  }

  Eigen::MatrixXd X(n, T);
  Eigen::VectorXd y(n), w(n);
  for (std::size_t s = 0; s < n; ++s) {
    const Mask& m = masks[s];
    for (std::size_t j = 0; j < T; ++j) X(s, j) = m[j];
    const auto masked = text::filter_surface(tokens, [&](std::size_t ordinal) {
      const long f = feature_of_ordinal[ordinal];
      return f < 0 || m[static_cast<std::size_t>(f)] == 1;
    });
    y(s) = field == Field::message ? scorer.score(cve.tokens, masked, chunk) : scorer.score(cve.tokens, msg, masked);
    w(s) = proximity(m, config.kernel_width);
  }

  const RidgeFit full = fit_ridge(X, y, w, config.ridge_lambda);
  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return full.coef(a) > full.coef(b); });
  std::vector<std::size_t> chosen;
  for (std::size_t j : order) {
    if (chosen.size() == k) break;
    if (selection == Selection::positive_only && full.coef(j) <= 0.0) break;
    chosen.push_back(j);
  }
  if (chosen.empty()) return out;

  Eigen::MatrixXd Xs(n, chosen.size());
  for (std::size_t c = 0; c < chosen.size(); ++c) Xs.col(c) = X.col(chosen[c]);
  const RidgeFit refit = fit_ridge(Xs, y, w, config.ridge_lambda);

  for (std::size_t c = 0; c < chosen.size(); ++c) {
    const double weight = std::max(refit.coef(c), 0.0);
    if (selection == Selection::positive_only && weight <= 0.0) continue;
    out.highlight.items.push_back({tokens[features[chosen[c]]], weight});
  }
  std::stable_sort(out.highlight.items.begin(), out.highlight.items.end(),
                   [](const auto& a, const auto& b) { return a.weight > b.weight; });
  return out;
}

}  // namespace patchtrace::lime
