#pragma once

#include <functional>
#include <vector>

#include "diffurec/autodiff.hpp"
#include "oracles.hpp"

namespace testing {

using Build = std::function<diffurec::Var(diffurec::Tape&, const std::vector<diffurec::Var>&)>;

/// Reverse-mode adjoints of `build` at `inputs` against central differences;
/// returns the worst relative error over every input entry.
inline double gradcheck(std::vector<diffurec::Tensor> inputs, const Build& build, double h = 1e-5,
                        double floor = 1e-6) {
  using namespace diffurec;
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (auto& t : inputs) vars.push_back(tape.variable(t));
    Var loss = build(tape, vars);
    tape.backward(loss);
    for (auto& v : vars) {
      auto g = v.grad();
      analytic.emplace_back(g.begin(), g.end());
      if (analytic.back().empty()) analytic.back().assign(v.size(), 0.0);
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto f = [&] {
      Tape tape(false);
      std::vector<Var> vars;
      for (auto& t : inputs) vars.push_back(tape.view(t));
      return build(tape, vars).item();
    };
    const auto numeric = oracle::numeric_gradient(f, inputs[i], h);
    worst = std::max(worst, oracle::max_relative_error(analytic[i], numeric, floor));
  }
  return worst;
}

/// Reduces any tensor to a scalar with fixed pseudo-random weights so every
/// output entry contributes a distinct adjoint.
inline diffurec::Var weighted_sum(diffurec::Var x, std::uint64_t seed = 99) {
  diffurec::Rng rng(seed);
  auto w = diffurec::sample_gaussian(rng, x.shape());
  return diffurec::sum(diffurec::mul(x, x.tape()->constant(std::move(w))));
}

}  // namespace testing
