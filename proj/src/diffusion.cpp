#include "diffurec/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "diffurec/errors.hpp"

namespace diffurec {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " differ");
}

}  // namespace

Tensor embed_to_x0(const Tensor& e_target, const NoiseSchedule& schedule, Rng& rng) {
  return embed_to_x0(e_target, schedule, sample_gaussian(rng, e_target.shape()));
}

Tensor embed_to_x0(const Tensor& e_target, const NoiseSchedule& schedule, const Tensor& eps) {
  require_same_shape(e_target, eps, "embed_to_x0");
  const double a0 = schedule.alpha0();
  const double keep = std::sqrt(a0), noise = std::sqrt(1.0 - a0);
  Tensor out(e_target.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * e_target[i] + noise * eps[i];
  return out;
}

Var embed_to_x0(Var e_target, const NoiseSchedule& schedule, const Tensor& eps) {
  if (e_target.shape() != eps.shape())
    throw DimensionError("embed_to_x0: shapes " + shape_string(e_target.shape()) + " and " +
                         shape_string(eps.shape()) + " differ");
  const double a0 = schedule.alpha0();
  Tensor noise = eps;
  for (auto& v : noise.data()) v *= std::sqrt(1.0 - a0);
  return add(scale(e_target, std::sqrt(a0)), e_target.tape()->constant(std::move(noise)));
}

Tensor q_sample(const Tensor& x0, int s, const NoiseSchedule& schedule, const Tensor& eps) {
  if (s < 1 || s > schedule.steps())
    throw std::invalid_argument("q_sample: step " + std::to_string(s) + " outside [1, " +
                                std::to_string(schedule.steps()) + "]");
  require_same_shape(x0, eps, "q_sample");
  const double ab = schedule.alpha_bar(s);
  const double keep = std::sqrt(ab), noise = std::sqrt(1.0 - ab);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * x0[i] + noise * eps[i];
  return out;
}

Var q_sample(Var x0, std::span<const int> steps, const NoiseSchedule& schedule, const Tensor& eps) {
  const Shape& s = x0.shape();
  if (s.size() != 2 || steps.size() != s[0] || eps.shape() != s)
    throw DimensionError("q_sample: x0 " + shape_string(s) + ", eps " + shape_string(eps.shape()) + ", " +
                         std::to_string(steps.size()) + " steps do not agree");
  const std::size_t rows = s[0], d = s[1];
  Tensor keep(s), noise(s);
  for (std::size_t r = 0; r < rows; ++r) {
    const int step = steps[r];
    if (step < 1 || step > schedule.steps())
      throw std::invalid_argument("q_sample: step " + std::to_string(step) + " outside [1, " +
                                  std::to_string(schedule.steps()) + "]");
    const double ab = schedule.alpha_bar(step);
    for (std::size_t j = 0; j < d; ++j) {
      keep.at(r, j) = std::sqrt(ab);
      noise.at(r, j) = std::sqrt(1.0 - ab) * eps.at(r, j);
    }
  }
  Tape& t = *x0.tape();
  return add(mul(x0, t.constant(std::move(keep))), t.constant(std::move(noise)));
}

Tensor reverse_step(const Tensor& x_s, const Tensor& x0_hat, int s, const NoiseSchedule& schedule,
                    const Tensor& eps_prime, ReverseNoise noise) {
  if (s < 1 || s > schedule.steps())
    throw std::invalid_argument("reverse_step: step " + std::to_string(s) + " outside [1, " +
                                std::to_string(schedule.steps()) + "]");
  require_same_shape(x_s, x0_hat, "reverse_step");
  require_same_shape(x_s, eps_prime, "reverse_step");
  if (s == 1) return x0_hat;
  const auto c = schedule.posterior(s);
  const double sigma = noise == ReverseNoise::Literal ? c.beta_tilde : std::sqrt(c.beta_tilde);
  Tensor out(x_s.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = c.coef_x0 * x0_hat[i] + c.coef_xs * x_s[i] + sigma * eps_prime[i];
  return out;
}

void reverse_step(DiffusionState& state, const Tensor& x0_hat, const NoiseSchedule& schedule,
                  const Tensor& eps_prime, ReverseNoise noise) {
  state.x = reverse_step(state.x, x0_hat, state.step, schedule, eps_prime, noise);
  --state.step;
}

int sample_step(int t, Rng& rng) {
  if (t < 1) throw std::invalid_argument("sample_step: horizon must be >= 1");
  return static_cast<int>(rng.uniform_int(1, t));
}

}  // namespace diffurec
