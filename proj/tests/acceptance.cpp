// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "diffurec/checkpoint.hpp"
#include "diffurec/eval.hpp"
#include "support/oracles.hpp"
#include "support/pipeline_check.hpp"

using namespace diffurec;

namespace {

struct Verdict {
  enum Kind { Pass, Fail, Skip } kind = Fail;
  std::string detail;
};

Verdict check(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// --- 1 ---------------------------------------------------------------------

Verdict forward_marginal() {
  const auto s = NoiseSchedule::build(ScheduleKind::TruncatedLinear, 8);
  const int t = 8;
  const std::size_t dim = 4, chains = 100000;
  Rng rng(1);
  double worst_mean = 0, worst_var = 0;
  const Tensor x0(Shape{dim}, 1.0);
  std::vector<oracle::Vec> iterated(dim, oracle::Vec(chains)), closed(dim, oracle::Vec(chains));
  for (std::size_t c = 0; c < chains; ++c) {
    Tensor x = x0;
    for (int k = 1; k <= t; ++k)
      for (std::size_t j = 0; j < dim; ++j) x[j] = std::sqrt(1 - s.beta(k)) * x[j] + std::sqrt(s.beta(k)) * rng.normal();
    const auto xt = q_sample(x0, t, s, sample_gaussian(rng, Shape{dim}));
    for (std::size_t j = 0; j < dim; ++j) {
      iterated[j][c] = x[j];
      closed[j][c] = xt[j];
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    const auto [m1, v1] = oracle::moments(iterated[j]);
    const auto [m2, v2] = oracle::moments(closed[j]);
    worst_mean = std::max(worst_mean, std::abs(m1 - m2));
    worst_var = std::max(worst_var, std::abs(v1 - v2));
  }
  return check(worst_mean < 0.01 && worst_var < 0.02,
               "max |mean diff| " + fmt(worst_mean) + ", max |var diff| " + fmt(worst_var));
}

// --- 2 ---------------------------------------------------------------------

Verdict gradient_soundness() {
  double worst = 0;
  std::string where;
  std::size_t entries = 0;
  for (auto bb : {Backbone::Transformer, Backbone::Gru}) {
    const auto r = testing::diffusion_loss_gradcheck(1, bb);
    entries += r.entries;
    if (r.worst >= worst) {
      worst = r.worst;
      where = r.worst_tensor;
    }
  }
  return check(worst < 1e-4, "max relative error " + fmt(worst, 3) + " (" + where + ") over " +
                                 std::to_string(entries) + " entries");
}

// --- 3 ---------------------------------------------------------------------

Verdict posterior_degeneracy() {
  const auto s = NoiseSchedule::build(ScheduleKind::TruncatedLinear, 32);
  Rng rng(3);
  int identical = 0;
  for (int i = 0; i < 100; ++i) {
    const auto xs = sample_gaussian(rng, Shape{16}, 0.0, 3.0);
    const auto x0 = sample_gaussian(rng, Shape{16}, 0.0, 3.0);
    const auto eps = sample_gaussian(rng, Shape{16});
    const auto noise = i % 2 ? ReverseNoise::Sqrt : ReverseNoise::Literal;
    identical += reverse_step(xs, x0, 1, s, eps, noise).identical(x0);
  }
  return check(identical == 100, std::to_string(identical) + "/100 bit-identical");
}

// --- 4, 5, 6 and their reruns for 11 -----------------------------------------

struct RunRecord {
  std::string checkpoint;
  std::string report;
};

TrainConfig learning_config(int steps) {
  auto cfg = TrainConfig::desk();
  cfg.steps = steps;
  cfg.delta = 0.001;
  cfg.epochs = 50;
  cfg.seed = 7;
  return cfg;
}

std::pair<Verdict, RunRecord> learnability() {
  const auto ds = synth(SynthKind::Cyclic, 1000, 50, 20, 7);
  const auto cfg = learning_config(8);
  Rng rng(cfg.seed);
  const auto result = train(ds, cfg, rng);
  const auto model = make_recommender(result.checkpoint);
  EvalOptions opt;
  opt.seed = 11;
  opt.cutoffs = {1, 5, 10, 20};
  const auto report = evaluate(*model, split(ds).test, opt);
  const double hr1 = report.hr.at(1), hr5 = report.hr.at(5);
  return {check(hr1 >= 0.8 && hr5 >= 0.95, "HR@1 " + fmt(hr1) + ", HR@5 " + fmt(hr5) + " after " +
                                               std::to_string(result.epochs.size()) + " epochs"),
          {serialize_checkpoint(result.checkpoint), report_csv({report})}};
}

struct MarkovRun {
  SequenceDataset data;
  DatasetSplit parts;
  ModelCheckpoint trained;
};

MarkovRun markov_model() {
  MarkovRun run;
  run.data = synth(SynthKind::Markov, 1000, 100, 20, 5);
  run.parts = split(run.data);
  const auto cfg = learning_config(8);
  Rng rng(cfg.seed);
  run.trained = train(run.data, cfg, rng).checkpoint;
  return run;
}

std::pair<Verdict, RunRecord> relative_ordering(const MarkovRun& run) {
  const auto n_items = static_cast<int>(run.data.n_items());
  EvalOptions opt;
  opt.seed = 13;
  const auto trained = make_recommender(run.trained);
  const auto r_trained = evaluate(*trained, run.parts.test, opt);

  const PopularityModel pop(item_frequencies(run.parts, run.data.n_items()));
  const auto r_pop = evaluate(pop, run.parts.test, opt);

  Rng init(run.trained.config.seed);
  const ModelCheckpoint untrained_ckpt{run.trained.config,
                                       ApproximatorParams::init(run.trained.config.approximator(n_items), init),
                                       n_items, 0};
  const auto untrained = make_recommender(untrained_ckpt);
  const auto r_untrained = evaluate(*untrained, run.parts.test, opt);

  const double n = r_trained.ndcg.at(10), p = r_pop.ndcg.at(10), u = r_untrained.ndcg.at(10);
  auto tr = r_trained, po = r_pop, un = r_untrained;
  tr.label = "diffurec";
  po.label = "popularity";
  un.label = "untrained";
  return {check(n >= 2 * p && n >= 5 * u, "NDCG@10 trained " + fmt(n) + ", popularity " + fmt(p) + ", untrained " +
                                              fmt(u)),
          {serialize_checkpoint(run.trained), report_csv({tr, po, un})}};
}

std::pair<Verdict, RunRecord> uncertainty(const MarkovRun& run) {
  const auto& history = run.parts.test.front().history;
  const auto trained = make_recommender(run.trained);
  const auto probe = uncertainty_probe(*trained, history, 100, 20, 1000);

  // Control: same reverse chain, but the estimator ignores x_s and always
  // returns the embedding of the last history item, so every reverse ends
  // on the same x_0.
  const Tensor table = run.trained.params.item_embeddings;
  const auto d = table.dim(1);
  X0Estimator fixed = [table, d](const SequenceBatch& b, const Tensor&, int, std::span<Rng>) {
    Tensor out(Shape{b.batch, d});
    for (std::size_t r = 0; r < b.batch; ++r) {
      const auto item = static_cast<std::size_t>(b.items[r * b.length + b.length - 1]);
      for (std::size_t j = 0; j < d; ++j) out.at(r, j) = table.at(item, j);
    }
    return out;
  };
  const DiffuRecModel control(table, NoiseSchedule::build(run.trained.config.schedule_params()), fixed,
                              run.trained.config.max_len);
  const auto control_probe = uncertainty_probe(control, history, 100, 20, 1000);
  return {check(probe.unique_item_count > 20 && control_probe.unique_item_count == 20,
                "unique items in top-20 over 100 reverses: trained " + std::to_string(probe.unique_item_count) +
                    ", deterministic control " + std::to_string(control_probe.unique_item_count)),
          {"", probe_csv(probe)}};
}

// --- 7 ---------------------------------------------------------------------

Verdict schedule_shape() {
  std::vector<std::string> problems;
  double smallest_ab1 = INFINITY;
  ScheduleKind smallest_kind{};
  int steepest = 0;
  for (auto kind : {ScheduleKind::TruncatedLinear, ScheduleKind::Linear, ScheduleKind::Cosine, ScheduleKind::Sqrt}) {
    // Read the dumped table back rather than the in-memory schedule.
    std::istringstream csv(schedule_csv(NoiseSchedule::build(kind, 32)));
    std::string line;
    std::getline(csv, line);
    std::vector<double> ab{1.0};
    while (std::getline(csv, line)) {
      std::vector<double> cells;
      std::istringstream row(line);
      for (std::string c; std::getline(row, c, ',');) cells.push_back(std::stod(c));
      const double beta = cells.at(1);
      if (!(beta > 0 && beta < 1)) problems.push_back(to_string(kind) + " beta out of (0,1)");
      if (!(cells.at(3) < ab.back())) problems.push_back(to_string(kind) + " alpha_bar not decreasing");
      ab.push_back(cells.at(3));
    }
    if (ab.size() != 33) problems.push_back(to_string(kind) + " wrong row count");
    if (ab[1] < smallest_ab1) {
      smallest_ab1 = ab[1];
      smallest_kind = kind;
    }
    if (kind == ScheduleKind::TruncatedLinear) {
      double drop = -1;
      for (int k = 1; k < static_cast<int>(ab.size()); ++k)
        if (ab[k - 1] - ab[k] > drop) {
          drop = ab[k - 1] - ab[k];
          steepest = k;
        }
    }
  }
  if (smallest_kind != ScheduleKind::Sqrt) problems.push_back("smallest alpha_bar_1 is " + to_string(smallest_kind));
  if (!(3 * steepest > 32 && 3 * steepest <= 64))
    problems.push_back("truncated-linear steepest drop at s = " + std::to_string(steepest));
  std::string detail = "truncated-linear steepest drop at s = " + std::to_string(steepest) + " of 32";
  for (const auto& p : problems) detail += "; " + p;
  return check(problems.empty(), detail);
}

// --- 8 ---------------------------------------------------------------------

Verdict metric_oracle() {
  const auto a = metric_single(1, 5), b = metric_single(4, 5), c = metric_single(11, 10);
  const bool ok = a.hr == 1 && a.ndcg == 1 && b.hr == 1 && std::abs(b.ndcg - 0.430676558073393) < 1e-12 &&
                  c.hr == 0 && c.ndcg == 0;
  return check(ok, "rank 4, K 5 -> NDCG " + fmt(b.ndcg, 15));
}

// --- 9 ---------------------------------------------------------------------

Verdict adversarial_contract() {
  const auto data = synth(SynthKind::Markov, 300, 50, 12, 9);
  const auto parts = split(data);
  const auto examples = training_examples(parts);
  auto cfg = TrainConfig::desk();
  cfg.mode = TrainMode::AdversarialBaseline;
  cfg.epochs = 3;
  cfg.batch_size = 128;
  cfg.seed = 9;

  double worst_total = 0, worst_norm = 0;
  std::size_t logged = 0;
  for (double gamma : {1.0, 0.5}) {
    cfg.gamma = gamma;
    cfg.epsilon_adv = 0.0;
    Rng r0(cfg.seed);
    for (const auto& s : train(examples, static_cast<int>(data.n_items()), cfg, r0).adversarial_steps) {
      worst_total = std::max(worst_total, std::abs(s.total_loss - (1 + gamma) * s.base_loss));
      ++logged;
    }
    cfg.epsilon_adv = 0.5;
    Rng r1(cfg.seed);
    for (const auto& s : train(examples, static_cast<int>(data.n_items()), cfg, r1).adversarial_steps) {
      worst_norm = std::max(worst_norm, std::abs(s.delta_norm - 0.5));
      ++logged;
    }
  }
  return check(logged > 0 && worst_total < 1e-10 && worst_norm < 1e-10,
               std::to_string(logged) + " steps; max |total - (1+gamma) base| " + fmt(worst_total, 3) +
                   ", max ||Delta| - eps| " + fmt(worst_norm, 3));
}

// --- 10 --------------------------------------------------------------------

Verdict beauty_protocol() {
  const char* path = std::getenv("DIFFUREC_BEAUTY_PATH");
  if (!path || !std::filesystem::exists(path))
    return {Verdict::Skip, "set DIFFUREC_BEAUTY_PATH to the Beauty interaction TSV to run this check"};
  const auto ds = preprocess(ingest(path));
  const std::size_t users = ds.sequences.size(), items = ds.n_items(), actions = ds.actions_before_truncation;
  return check(users == 22363 && items == 12101 && actions == 198502,
               std::to_string(users) + " sequences, " + std::to_string(items) + " items, " + std::to_string(actions) +
                   " actions");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run just these criteria (11 implies 4-6)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  int failures = 0;
  auto report = [&](int id, const std::string& name, const Verdict& v, double seconds) {
    const char* tag = v.kind == Verdict::Pass ? "PASS" : v.kind == Verdict::Fail ? "FAIL" : "SKIP";
    failures += v.kind == Verdict::Fail;
    std::cout << "[" << tag << "] criterion " << id << " " << name << ": " << v.detail << " (" << fmt(seconds, 3)
              << " s)" << std::endl;
  };
  auto timed = [&](int id, const std::string& name, const std::function<Verdict()>& body) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    report(id, name, v, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  timed(1, "forward marginal", forward_marginal);
  timed(2, "gradient soundness", gradient_soundness);
  timed(3, "posterior degeneracy", posterior_degeneracy);

  // 4-6 produce the artifacts that 11 compares against a second run.
  std::vector<RunRecord> first, second;
  const bool rerun = wanted(11);
  auto learning_block = [&](std::vector<RunRecord>& sink, bool print) {
    auto step = [&](int id, const std::string& name, const std::function<std::pair<Verdict, RunRecord>()>& body) {
      if (!print || wanted(id) || rerun) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
          auto [v, rec] = body();
          sink.push_back(std::move(rec));
          if (print && wanted(id))
            report(id, name, v, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        } catch (const std::exception& e) {
          sink.push_back({});
          if (print && wanted(id)) report(id, name, {Verdict::Fail, std::string("exception: ") + e.what()}, 0);
        }
      }
    };
    step(4, "learnability", learnability);
    if (wanted(5) || wanted(6) || rerun) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto run = markov_model();
      const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (print) std::cout << "  (markov model trained in " << fmt(train_seconds, 3) << " s)" << std::endl;
      step(5, "relative ordering", [&] { return relative_ordering(run); });
      step(6, "uncertainty", [&] { return uncertainty(run); });
    }
  };
  if (wanted(4) || wanted(5) || wanted(6) || rerun) learning_block(first, true);

  timed(7, "schedule shape", schedule_shape);
  timed(8, "metric oracle", metric_oracle);
  timed(9, "adversarial contract", adversarial_contract);
  timed(10, "Beauty data protocol", beauty_protocol);

  timed(11, "determinism", [&] {
    learning_block(second, false);
    bool same = first.size() == second.size() && !first.empty();
    for (std::size_t i = 0; same && i < first.size(); ++i)
      same = first[i].checkpoint == second[i].checkpoint && first[i].report == second[i].report;
    return check(same, std::to_string(first.size()) + " checkpoint/report pairs from criteria 4-6 compared byte for byte");
  });

  std::cout << (failures ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED") << " (" << failures << " failing)" << std::endl;
  return failures ? 1 : 0;
}
