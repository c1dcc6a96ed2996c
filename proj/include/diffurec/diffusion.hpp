#pragma once

#include <span>

#include "diffurec/autodiff.hpp"
#include "diffurec/rng.hpp"
#include "diffurec/schedule.hpp"
#include "diffurec/tensor.hpp"

namespace diffurec {

/// How the posterior variance scales the fresh noise in a reverse step.
enum class ReverseNoise {
  Literal,  ///< x_{s-1} = mean + beta_tilde * eps'
  Sqrt,     ///< x_{s-1} = mean + sqrt(beta_tilde) * eps'
};

/// Representation being reversed and the step it sits at.
struct DiffusionState {
  Tensor x;
  int step = 0;
};

/// One-step corruption of target embeddings:
/// x_0 = sqrt(alpha0) * e + sqrt(1 - alpha0) * eps with eps ~ N(0, I).
Tensor embed_to_x0(const Tensor& e_target, const NoiseSchedule& schedule, Rng& rng);
/// Same with the noise supplied.
Tensor embed_to_x0(const Tensor& e_target, const NoiseSchedule& schedule, const Tensor& eps);
/// Differentiable variant used by training.
Var embed_to_x0(Var e_target, const NoiseSchedule& schedule, const Tensor& eps);

/// x_s = sqrt(alpha_bar_s) * x_0 + sqrt(1 - alpha_bar_s) * eps.
Tensor q_sample(const Tensor& x0, int s, const NoiseSchedule& schedule, const Tensor& eps);
/// Batched differentiable variant: row b of x0 [batch x dim] is noised to steps[b].
Var q_sample(Var x0, std::span<const int> steps, const NoiseSchedule& schedule, const Tensor& eps);

/// x_{s-1} = coef_x0 * x0_hat + coef_xs * x_s + noise_scale * eps'.
/// At s = 1 the result is x0_hat exactly.
Tensor reverse_step(const Tensor& x_s, const Tensor& x0_hat, int s, const NoiseSchedule& schedule,
                    const Tensor& eps_prime, ReverseNoise noise = ReverseNoise::Literal);

/// Applies reverse_step in place and decrements state.step.
void reverse_step(DiffusionState& state, const Tensor& x0_hat, const NoiseSchedule& schedule,
                  const Tensor& eps_prime, ReverseNoise noise = ReverseNoise::Literal);

/// Uniform diffusion step in [1, t].
int sample_step(int t, Rng& rng);

}  // namespace diffurec
