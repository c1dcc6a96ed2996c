#include <doctest.h>

#include <cmath>
#include <set>

#include "diffurec/eval.hpp"

using namespace diffurec;

namespace {

/// Scores item (last + 1) mod n highest: perfect on cyclic data.
class NextInCycle : public Recommender {
 public:
  explicit NextInCycle(int n) : n_(n) {}
  int n_items() const override { return n_; }
  std::vector<Scored> score_batch(std::span<const std::vector<int>> histories, std::span<Rng>) const override {
    std::vector<Scored> out;
    for (const auto& h : histories) {
      std::vector<double> s(static_cast<std::size_t>(n_), 0.0);
      s[static_cast<std::size_t>(h.back() % n_)] = 1.0;
      out.push_back({s, Tensor()});
    }
    return out;
  }

 private:
  int n_;
};

/// Puts the user's own history at the top, in order.
class HistoryFirst : public Recommender {
 public:
  explicit HistoryFirst(int n) : n_(n) {}
  int n_items() const override { return n_; }
  std::vector<Scored> score_batch(std::span<const std::vector<int>> histories, std::span<Rng>) const override {
    std::vector<Scored> out;
    for (const auto& h : histories) {
      std::vector<double> s(static_cast<std::size_t>(n_), 0.0);
      for (int i : h) s[static_cast<std::size_t>(i - 1)] = 10.0;
      out.push_back({s, Tensor()});
    }
    return out;
  }

 private:
  int n_;
};

std::vector<Outcome> outcomes_with_ranks(const std::vector<std::size_t>& ranks, const std::vector<int>& targets = {}) {
  std::vector<Outcome> out;
  for (std::size_t i = 0; i < ranks.size(); ++i)
    out.push_back({i, ranks[i], i + 1, targets.empty() ? 1 : targets[i]});
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("metric_single examples") {
    auto m = metric_single(1, 5);
    CHECK(m.hr == 1.0);
    CHECK(m.ndcg == 1.0);
    m = metric_single(4, 5);
    CHECK(m.hr == 1.0);
    CHECK(std::abs(m.ndcg - 0.43067655807339306) < 1e-12);
    CHECK(std::abs(m.ndcg - 1.0 / std::log2(5.0)) < 1e-15);
    m = metric_single(11, 10);
    CHECK(m.hr == 0.0);
    CHECK(m.ndcg == 0.0);
    m = metric_single(10, 10);
    CHECK(m.hr == 1.0);
    CHECK(m.ndcg == doctest::Approx(1.0 / std::log2(11.0)));
  }

  TEST_CASE("metric_single rejects rank 0 and K 0") {
    CHECK_THROWS_AS(metric_single(0, 5), std::invalid_argument);
    CHECK_THROWS_AS(metric_single(1, 0), std::invalid_argument);
  }

  TEST_CASE("ndcg <= hr and both fall with rank") {
    for (int k : {1, 5, 10, 20})
      for (std::size_t r = 1; r < 40; ++r) {
        const auto a = metric_single(r, k), b = metric_single(r + 1, k);
        CHECK(a.ndcg <= a.hr);
        CHECK(b.hr <= a.hr);
        CHECK(b.ndcg <= a.ndcg);
      }
  }

  TEST_CASE("summarize averages per-target metrics") {
    const auto report = summarize(outcomes_with_ranks({1, 3, 7, 30}));
    CHECK(report.n_evaluated == 4);
    CHECK(report.hr.at(5) == doctest::Approx(0.5));
    CHECK(report.hr.at(10) == doctest::Approx(0.75));
    CHECK(report.hr.at(20) == doctest::Approx(0.75));
    CHECK(report.ndcg.at(5) == doctest::Approx((1.0 + 0.5) / 4));
    CHECK(report_consistent(report));
    CHECK(summarize({}).empty());
  }

  TEST_CASE("report_consistent catches broken nesting and bounds") {
    EvalReport r;
    r.n_evaluated = 1;
    r.hr = {{5, 0.5}, {10, 0.4}, {20, 0.6}};
    r.ndcg = {{5, 0.1}, {10, 0.1}, {20, 0.1}};
    CHECK_FALSE(report_consistent(r));
    r.hr[10] = 0.5;
    CHECK(report_consistent(r));
    r.ndcg[20] = 0.7;
    CHECK_FALSE(report_consistent(r));
  }

  TEST_CASE("CSV and table output") {
    auto all = summarize(outcomes_with_ranks({1, 2}));
    const auto csv = report_csv({all});
    CHECK(csv.rfind("metric,K,value,bucket\n", 0) == 0);
    CHECK(csv.find("HR,5,1,all") != std::string::npos);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 1 + 6 + 1);
    CHECK(csv.find("n_evaluated,0,2,all") != std::string::npos);
    CHECK(report_table({all}).find("HR@10") != std::string::npos);
  }
}

TEST_SUITE("evaluate") {
  TEST_CASE("a rigged oracle scores 1 everywhere") {
    const auto ds = synth(SynthKind::Cyclic, 50, 20, 8, 1);
    const auto sp = split(ds);
    const NextInCycle oracle(20);
    const auto report = evaluate(oracle, sp.test, EvalOptions{});
    CHECK(report.n_evaluated == 50);
    for (int k : kDefaultCutoffs) {
      CHECK(report.hr.at(k) == 1.0);
      CHECK(report.ndcg.at(k) == 1.0);
    }
  }

  TEST_CASE("empty split is an argument error") {
    const NextInCycle oracle(5);
    CHECK_THROWS_AS(evaluate(oracle, std::vector<Example>{}, EvalOptions{}), std::invalid_argument);
  }

  TEST_CASE("untrained model over 1000 items is calibrated to K/|I|") {
    // Uniform random targets make any fixed scoring rule a uniform ranking.
    auto cfg = TrainConfig::desk();
    cfg.dim = 8;
    cfg.blocks = 1;
    cfg.steps = 4;
    const int n_items = 1000;
    Rng rng(42);
    ModelCheckpoint ckpt{cfg, ApproximatorParams::init(cfg.approximator(n_items), rng), n_items, 0};
    const auto model = make_recommender(ckpt);
    std::vector<Example> ex;
    const std::size_t n = 3000;
    for (std::size_t i = 0; i < n; ++i) {
      Example e{i, {}, static_cast<int>(rng.uniform_int(1, n_items))};
      for (int j = 0; j < 5; ++j) e.history.push_back(static_cast<int>(rng.uniform_int(1, n_items)));
      ex.push_back(e);
    }
    EvalOptions opt;
    opt.threads = 0;
    const auto report = evaluate(*model, ex, opt);
    for (int k : kDefaultCutoffs) {
      const double p = static_cast<double>(k) / n_items;
      const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
      CAPTURE(k);
      CHECK(std::abs(report.hr.at(k) - p) < 4 * sigma);
    }
    CHECK(report_consistent(report));
  }

  TEST_CASE("results do not depend on batch size or thread count") {
    auto cfg = TrainConfig::desk();
    cfg.dim = 8;
    cfg.blocks = 1;
    cfg.steps = 4;
    Rng rng(3);
    ModelCheckpoint ckpt{cfg, ApproximatorParams::init(cfg.approximator(30), rng), 30, 0};
    const auto model = make_recommender(ckpt);
    const auto sp = split(synth(SynthKind::Markov, 80, 30, 9, 5));
    EvalOptions a;
    a.seed = 7;
    a.batch_size = 1;
    EvalOptions b = a;
    b.batch_size = 13;
    b.threads = 4;
    const auto ra = rank_targets(*model, sp.test, a), rb = rank_targets(*model, sp.test, b);
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].rank == rb[i].rank);
    EvalOptions c = a;
    c.seed = 8;
    const auto rc = rank_targets(*model, sp.test, c);
    bool differs = false;
    for (std::size_t i = 0; i < ra.size(); ++i) differs |= ra[i].rank != rc[i].rank;
    CHECK(differs);
  }

  TEST_CASE("mask-history drops history items but never the target") {
    const HistoryFirst model(10);
    const std::vector<Example> ex{{0, {1, 2, 3}, 4}, {1, {5, 6, 7}, 6}};
    EvalOptions opt;
    const auto plain = rank_targets(model, ex, opt);
    opt.mask_history = true;
    const auto masked = rank_targets(model, ex, opt);
    CHECK(plain[0].rank == 4);
    CHECK(masked[0].rank == 1);
    CHECK(plain[1].rank == 2);
    CHECK(masked[1].rank == 1);
  }

  TEST_CASE("popularity baseline HR@K is the share of targets in the top-K popular set") {
    const auto sp = split(synth(SynthKind::Markov, 200, 40, 10, 9));
    const auto freq = item_frequencies(sp, 40);
    const PopularityModel pop(freq);
    const auto ranking = popularity_ranking(freq);
    const auto report = evaluate(pop, sp.test, EvalOptions{});
    for (int k : kDefaultCutoffs) {
      const std::set<int> top(ranking.begin(), ranking.begin() + k);
      double inside = 0;
      for (const auto& e : sp.test) inside += top.count(e.target);
      CHECK(report.hr.at(k) == doctest::Approx(inside / static_cast<double>(sp.test.size())).epsilon(1e-14));
    }
  }
}

TEST_SUITE("popularity") {
  TEST_CASE("descending frequency") {
    const std::vector<std::size_t> f{0, 3, 1, 2};  // a=1, b=2, c=3
    CHECK(popularity_ranking(f) == std::vector<int>{1, 3, 2});
  }

  TEST_CASE("ties go to the smaller index") {
    const std::vector<std::size_t> f{0, 2, 2};
    CHECK(popularity_ranking(f) == std::vector<int>{1, 2});
    const std::vector<std::size_t> g{0, 1, 5, 1, 5};
    CHECK(popularity_ranking(g) == std::vector<int>{2, 4, 1, 3});
  }

  TEST_CASE("needs at least one item") {
    CHECK_THROWS_AS(PopularityModel(std::vector<std::size_t>{0}), std::invalid_argument);
  }
}

TEST_SUITE("breakdowns") {
  TEST_CASE("head set of 10 items is the top 2") {
    const std::vector<std::size_t> f{0, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
    CHECK(head_items(f) == std::vector<int>{1, 2});
    const std::vector<std::size_t> g{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK(head_items(g) == std::vector<int>{9, 10});
    const std::vector<std::size_t> ties{0, 4, 4, 4, 1, 1, 1, 1, 1, 1, 1};
    CHECK(head_items(ties) == std::vector<int>{1, 2});
    const std::vector<std::size_t> tiny{0, 1, 1};
    CHECK(head_items(tiny).size() == 1);
  }

  TEST_CASE("head and tail partition the outcomes") {
    const std::vector<std::size_t> f{0, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
    const auto outcomes = outcomes_with_ranks({1, 2, 30, 4, 5, 6}, {1, 2, 3, 9, 10, 2});
    const auto r = head_tail_report(outcomes, f);
    CHECK(r.head.n_evaluated == 3);
    CHECK(r.tail.n_evaluated == 3);
    CHECK(r.head.n_evaluated + r.tail.n_evaluated == outcomes.size());
    CHECK(r.head.hr.at(5) == doctest::Approx(2.0 / 3));
    CHECK(r.tail.hr.at(5) == doctest::Approx(2.0 / 3));
  }

  TEST_CASE("all-head targets leave an empty tail") {
    const std::vector<std::size_t> f{0, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1};
    const auto r = head_tail_report(outcomes_with_ranks({1, 2, 3}, {1, 2, 1}), f);
    CHECK(r.tail.n_evaluated == 0);
    CHECK(r.tail.empty());
    CHECK(r.head.n_evaluated == 3);
  }

  TEST_CASE("lengths 1..100 split at 20/40/60/80") {
    std::vector<Outcome> outcomes;
    for (std::size_t l = 1; l <= 100; ++l) outcomes.push_back({l - 1, 1, l, 1});
    const auto r = length_bucket_report(outcomes);
    CHECK(r.boundaries == std::vector<std::size_t>{20, 40, 60, 80});
    REQUIRE(r.buckets.size() == 5);
    for (const auto& b : r.buckets) CHECK(b.n_evaluated == 20);
    CHECK_FALSE(r.warning.has_value());
  }

  TEST_CASE("equal lengths put everything in the first bucket") {
    std::vector<Outcome> outcomes;
    for (std::size_t i = 0; i < 12; ++i) outcomes.push_back({i, 1, 7, 1});
    const auto r = length_bucket_report(outcomes);
    REQUIRE(r.buckets.size() == 5);
    CHECK(r.buckets[0].n_evaluated == 12);
    for (std::size_t k = 1; k < 5; ++k) CHECK(r.buckets[k].empty());
  }

  TEST_CASE("bucket counts always sum to the total") {
    Rng rng(4);
    std::vector<Outcome> outcomes;
    for (std::size_t i = 0; i < 333; ++i) outcomes.push_back({i, static_cast<std::size_t>(rng.uniform_int(1, 50)), static_cast<std::size_t>(rng.uniform_int(1, 40)), 1});
    const auto r = length_bucket_report(outcomes);
    std::size_t total = 0;
    for (const auto& b : r.buckets) total += b.n_evaluated;
    CHECK(total == 333);
  }

  TEST_CASE("fewer than five outcomes fall back to one bucket with a warning") {
    const auto r = length_bucket_report(outcomes_with_ranks({1, 2, 3}));
    CHECK(r.buckets.size() == 1);
    CHECK(r.buckets[0].n_evaluated == 3);
    CHECK(r.warning.has_value());
  }

  TEST_CASE("nearest-rank percentile") {
    CHECK(percentile({5, 1, 3, 2, 4}, 20) == 1);
    CHECK(percentile({5, 1, 3, 2, 4}, 50) == 3);
    CHECK(percentile({5, 1, 3, 2, 4}, 100) == 5);
    CHECK_THROWS_AS(percentile({}, 50), std::invalid_argument);
  }
}

TEST_SUITE("probe") {
  TEST_CASE("a deterministic model gives exactly K unique items") {
    const NextInCycle oracle(50);
    const auto probe = uncertainty_probe(oracle, {3, 4, 5}, 100, 20, 1);
    CHECK(probe.unique_item_count == 20);
    CHECK(probe.top_k.size() == 100);
  }

  TEST_CASE("stochastic reverse: bounds and monotone growth in n") {
    auto cfg = TrainConfig::desk();
    cfg.dim = 8;
    cfg.blocks = 1;
    cfg.steps = 4;
    cfg.delta = 1.0;  // enough mixing noise that reverses disagree
    Rng rng(6);
    ModelCheckpoint ckpt{cfg, ApproximatorParams::init(cfg.approximator(60), rng), 60, 0};
    const auto model = make_recommender(ckpt);
    std::size_t previous = 0;
    for (int n : {1, 2, 5, 10, 30}) {
      const auto p = uncertainty_probe(*model, {1, 2, 3}, n, 5, 100);
      CHECK(p.unique_item_count >= 5);
      CHECK(p.unique_item_count <= static_cast<std::size_t>(n) * 5);
      CHECK(p.unique_item_count >= previous);
      previous = p.unique_item_count;
      CHECK(p.representations.size() == static_cast<std::size_t>(n));
    }
    CHECK(previous > 5);
    const auto csv = probe_csv(uncertainty_probe(*model, {1, 2, 3}, 3, 5, 100));
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 4);
  }

  TEST_CASE("invalid probe arguments") {
    const NextInCycle oracle(5);
    CHECK_THROWS_AS(uncertainty_probe(oracle, {1}, 0, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(uncertainty_probe(oracle, {1}, 3, 0, 1), std::invalid_argument);
  }
}
