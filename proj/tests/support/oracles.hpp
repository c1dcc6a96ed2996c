// Reference computations used as test oracles. Everything here is written
// independently of the library's implementations: plain loops over
// std::vector<double>, no tape, no shared helpers.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "diffurec/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const diffurec::Tensor& t) {
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  Mat m(rows, Vec(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = t.data()[r * cols + c];
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Vec softmax(const Vec& x) {
  const double mx = *std::max_element(x.begin(), x.end());
  Vec e(x.size());
  double z = 0;
  for (std::size_t i = 0; i < x.size(); ++i) z += e[i] = std::exp(x[i] - mx);
  for (auto& v : e) v /= z;
  return e;
}

inline Vec layer_norm(const Vec& x, const Vec& g, const Vec& b, double eps = 1e-5) {
  double mu = 0, var = 0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = g[i] * (x[i] - mu) / std::sqrt(var + eps) + b[i];
  return out;
}

/// Betas of the truncated-linear family, step by step.
inline Vec truncated_linear_betas(int t, double a, double b, double tau) {
  Vec beta;
  for (int s = 1; s <= t; ++s) {
    double v = a / t * s + b / s;
    if (v > tau) v /= 10.0;
    beta.push_back(v);
  }
  return beta;
}

/// Cumulative products with the empty product at index 0.
inline Vec alpha_bars(const Vec& betas) {
  Vec out{1.0};
  for (double b : betas) out.push_back(out.back() * (1.0 - b));
  return out;
}

struct Posterior {
  double coef_x0, coef_xs, beta_tilde;
};

inline Posterior posterior(const Vec& betas, int s) {
  const Vec ab = alpha_bars(betas);
  const double beta = betas[static_cast<std::size_t>(s - 1)];
  const double ab_s = ab[static_cast<std::size_t>(s)], ab_prev = ab[static_cast<std::size_t>(s - 1)];
  return {std::sqrt(ab_prev) * beta / (1 - ab_s), std::sqrt(1 - beta) * (1 - ab_prev) / (1 - ab_s),
          (1 - ab_prev) / (1 - ab_s) * beta};
}

/// Central finite difference of f with respect to every entry of `param`.
inline Vec numeric_gradient(const std::function<double()>& f, diffurec::Tensor& param, double h = 1e-5) {
  Vec g(param.size());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double keep = param[i];
    param[i] = keep + h;
    const double up = f();
    param[i] = keep - h;
    const double down = f();
    param[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// |a - n| / max(|a|, |n|, floor): relative where the gradient is sizeable,
/// absolute (scaled by 1/floor) where both are tiny.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double max_relative_error(std::span<const double> analytic, const Vec& numeric, double floor = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < numeric.size(); ++i)
    worst = std::max(worst, relative_error(i < analytic.size() ? analytic[i] : 0.0, numeric[i], floor));
  return worst;
}

/// Sample mean and (population) variance.
inline std::pair<double, double> moments(const Vec& xs) {
  double mu = 0;
  for (double v : xs) mu += v;
  mu /= static_cast<double>(xs.size());
  double var = 0;
  for (double v : xs) var += (v - mu) * (v - mu);
  return {mu, var / static_cast<double>(xs.size())};
}

inline double ndcg_at(std::size_t rank, int k) {
  return rank <= static_cast<std::size_t>(k) ? std::log(2.0) / std::log(static_cast<double>(rank) + 1.0) : 0.0;
}

}  // namespace oracle
