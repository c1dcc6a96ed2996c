#include "diffurec/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "diffurec/errors.hpp"

namespace diffurec {
namespace {

constexpr double kMaxBeta = 0.999;

// beta_s = 1 - f(s/t) / f((s-1)/t), clipped at kMaxBeta.
std::vector<double> betas_from_alpha_bar(int t, const std::function<double(double)>& f) {
  std::vector<double> betas;
  betas.reserve(static_cast<std::size_t>(t));
  for (int s = 1; s <= t; ++s) {
    const double prev = f(static_cast<double>(s - 1) / t);
    const double cur = f(static_cast<double>(s) / t);
    betas.push_back(std::min(1.0 - cur / prev, kMaxBeta));
  }
  return betas;
}

std::vector<double> raw_betas(const ScheduleParams& p) {
  const int t = p.steps;
  std::vector<double> betas;
  switch (p.kind) {
    case ScheduleKind::TruncatedLinear:
      for (int s = 1; s <= t; ++s) {
        double beta = p.a / t * s + (p.b_constant ? p.b : p.b / s);
        if (beta > p.tau) beta /= 10.0;
        betas.push_back(beta);
      }
      return betas;
    case ScheduleKind::Linear: {
      // Linear 1e-4 .. 0.02 at 1000 steps, rescaled to the horizon.
      const double scale = 1000.0 / t;
      const double lo = scale * 1e-4, hi = scale * 0.02;
      for (int s = 1; s <= t; ++s)
        betas.push_back(t == 1 ? lo : lo + (hi - lo) * static_cast<double>(s - 1) / (t - 1));
      return betas;
    }
    case ScheduleKind::Cosine:
      return betas_from_alpha_bar(t, [](double u) {
        const double c = std::cos((u + 0.008) / 1.008 * M_PI / 2.0);
        return c * c;
      });
    case ScheduleKind::Sqrt:
      return betas_from_alpha_bar(t, [](double u) { return 1.0 - std::sqrt(u + 0.0001); });
  }
  return betas;
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::TruncatedLinear: return "truncated-linear";
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Cosine: return "cosine";
    case ScheduleKind::Sqrt: return "sqrt";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "truncated-linear" || name == "truncated_linear" || name == "trunc_lin") return ScheduleKind::TruncatedLinear;
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "cosine") return ScheduleKind::Cosine;
  if (name == "sqrt") return ScheduleKind::Sqrt;
  throw ConfigError("unknown schedule kind '" + std::string(name) + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleParams params, std::vector<double> betas) : params_(params) {
  params_.steps = static_cast<int>(betas.size());
  betas_.reserve(betas.size() + 1);
  betas_.push_back(0.0);
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double b = betas[i];
    if (!(b > 0.0 && b < 1.0)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "schedule step %zu has beta %.6g outside (0, 1)", i + 1, b);
      throw ScheduleError(buf, static_cast<int>(i + 1));
    }
    betas_.push_back(b);
  }
  alphas_.resize(betas_.size());
  alpha_bars_.resize(betas_.size());
  alphas_[0] = 1.0;
  alpha_bars_[0] = 1.0;
  for (std::size_t s = 1; s < betas_.size(); ++s) {
    alphas_[s] = 1.0 - betas_[s];
    alpha_bars_[s] = alpha_bars_[s - 1] * alphas_[s];
  }
}

NoiseSchedule NoiseSchedule::build(const ScheduleParams& params) {
  if (params.steps < 1) throw ConfigError("schedule horizon must be >= 1");
  return NoiseSchedule(params, raw_betas(params));
}

NoiseSchedule NoiseSchedule::build(ScheduleKind kind, int steps, double a, double b, double tau) {
  ScheduleParams p;
  p.kind = kind;
  p.steps = steps;
  p.a = a;
  p.b = b;
  p.tau = tau;
  return build(p);
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("schedule horizon must be >= 1");
  ScheduleParams p;
  return NoiseSchedule(p, std::move(betas));
}

void NoiseSchedule::check_step(int s, int lo, const char* what) const {
  if (s < lo || s > steps())
    throw std::invalid_argument(std::string(what) + ": step " + std::to_string(s) + " outside [" +
                                std::to_string(lo) + ", " + std::to_string(steps()) + "]");
}

double NoiseSchedule::beta(int s) const {
  check_step(s, 1, "beta");
  return betas_[static_cast<std::size_t>(s)];
}

double NoiseSchedule::alpha(int s) const {
  check_step(s, 1, "alpha");
  return alphas_[static_cast<std::size_t>(s)];
}

double NoiseSchedule::alpha_bar(int s) const {
  check_step(s, 0, "alpha_bar");
  return alpha_bars_[static_cast<std::size_t>(s)];
}

PosteriorCoeffs NoiseSchedule::posterior(int s) const {
  check_step(s, 1, "posterior");
  // alpha_bar(0) = 1 makes step 1 collapse onto x0_hat exactly.
  if (s == 1) return {1.0, 0.0, 0.0};
  const auto i = static_cast<std::size_t>(s);
  const double ab = alpha_bars_[i], ab_prev = alpha_bars_[i - 1];
  PosteriorCoeffs c;
  c.coef_x0 = std::sqrt(ab_prev) * betas_[i] / (1.0 - ab);
  c.coef_xs = std::sqrt(alphas_[i]) * (1.0 - ab_prev) / (1.0 - ab);
  c.beta_tilde = (1.0 - ab_prev) / (1.0 - ab) * betas_[i];
  return c;
}

std::string schedule_csv(const NoiseSchedule& schedule) {
  std::string out = "s,beta,alpha,alpha_bar,coef_x0,coef_xs,beta_tilde\n";
  char buf[256];
  for (int s = 1; s <= schedule.steps(); ++s) {
    const auto c = schedule.posterior(s);
    std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", s, schedule.beta(s), schedule.alpha(s),
                  schedule.alpha_bar(s), c.coef_x0, c.coef_xs, c.beta_tilde);
    out += buf;
  }
  return out;
}

}  // namespace diffurec
