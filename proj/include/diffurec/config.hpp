#pragma once

#include <cstdint>
#include <string>

#include "diffurec/approximator.hpp"
#include "diffurec/diffusion.hpp"
#include "diffurec/schedule.hpp"

namespace diffurec {

enum class TrainMode { DiffuRec, AdversarialBaseline };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

/// Everything that determines a training run. Serialized as `key = value`
/// lines whose keys are the field names below.
struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 50;
  int batch_size = 1024;
  int steps = 32;  // diffusion horizon t
  double delta = 0.001;
  bool lambda_per_dimension = true;

  ScheduleKind schedule = ScheduleKind::TruncatedLinear;
  double schedule_a = 0.2;
  double schedule_b = 0.008;
  double schedule_tau = 1.0;
  bool schedule_b_constant = false;

  double dropout_block = 0.1;
  double dropout_embed = 0.3;
  int max_len = 50;
  int dim = 128;
  int blocks = 4;
  int heads = 4;
  Backbone backbone = Backbone::Transformer;
  bool reverse_noise_sqrt = false;

  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::DiffuRec;
  double epsilon_adv = 0.5;
  double gamma = 1.0;

  /// Validation HR@10 is checked every eval_every epochs (0 disables early
  /// stopping); training stops after `patience` evaluations without improvement.
  int eval_every = 5;
  int patience = 3;

  /// Small model for single-core runs: dim 32, 2 blocks, 2 heads.
  static TrainConfig desk();

  /// Throws ConfigError on any out-of-range field.
  void validate() const;

  ApproximatorConfig approximator(int n_items) const;
  ScheduleParams schedule_params() const;
  MixConfig mix() const;
  ReverseNoise reverse_noise() const { return reverse_noise_sqrt ? ReverseNoise::Sqrt : ReverseNoise::Literal; }

  std::string serialize() const;
  /// Parses `key = value` lines; `#` starts a comment. Unknown keys and
  /// malformed values throw ConfigError (with the line number). Missing
  /// keys keep their defaults. The result is validated.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);
};

}  // namespace diffurec
