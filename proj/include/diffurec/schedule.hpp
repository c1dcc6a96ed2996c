#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace diffurec {

enum class ScheduleKind { TruncatedLinear, Linear, Cosine, Sqrt };

std::string to_string(ScheduleKind kind);
/// Accepts "truncated-linear", "linear", "cosine", "sqrt". Throws ConfigError.
ScheduleKind parse_schedule_kind(std::string_view name);

struct ScheduleParams {
  ScheduleKind kind = ScheduleKind::TruncatedLinear;
  int steps = 32;
  double a = 0.2;
  double b = 0.008;
  double tau = 1.0;
  /// Use a constant offset b instead of b / s in the truncated-linear form.
  bool b_constant = false;
};

/// Reverse-posterior coefficients for step s:
///   mean = coef_x0 * x0_hat + coef_xs * x_s,  variance = beta_tilde.
struct PosteriorCoeffs {
  double coef_x0 = 0.0;
  double coef_xs = 0.0;
  double beta_tilde = 0.0;
};

/// Immutable beta / alpha / alpha-bar tables for steps 1..t, with
/// alpha_bar(0) = 1.
class NoiseSchedule {
 public:
  /// Throws ScheduleError naming the first step whose beta falls outside (0, 1).
  static NoiseSchedule build(const ScheduleParams& params);
  static NoiseSchedule build(ScheduleKind kind, int steps, double a = 0.2, double b = 0.008, double tau = 1.0);
  /// Direct construction from betas (index 0 is step 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  const ScheduleParams& params() const noexcept { return params_; }
  int steps() const noexcept { return static_cast<int>(betas_.size()) - 1; }

  double beta(int s) const;
  double alpha(int s) const;
  double alpha_bar(int s) const;
  /// Noise level of the one-step corruption from an item embedding to x_0.
  double alpha0() const { return alphas_[1]; }
  PosteriorCoeffs posterior(int s) const;

  // Index 0 holds the s = 0 entry (beta 0, alpha 1, alpha_bar 1).
  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

 private:
  NoiseSchedule(ScheduleParams params, std::vector<double> betas);
  void check_step(int s, int lo, const char* what) const;

  ScheduleParams params_;
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

/// CSV with header s,beta,alpha,alpha_bar,coef_x0,coef_xs,beta_tilde and
/// 12 significant digits, one row per step 1..t.
std::string schedule_csv(const NoiseSchedule& schedule);

}  // namespace diffurec
