#include "diffurec/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace diffurec {

MetricPair metric_single(std::size_t rank, int k) {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (k < 1) throw std::invalid_argument("cutoff K must be >= 1");
  if (rank > static_cast<std::size_t>(k)) return {0.0, 0.0};
  return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

std::vector<Outcome> rank_targets(const Recommender& model, std::span<const Example> examples,
                                  const EvalOptions& options) {
  if (examples.empty()) throw std::invalid_argument("evaluation split is empty");
  const std::size_t chunk = std::max<std::size_t>(1, options.batch_size);
  const std::size_t n_chunks = (examples.size() + chunk - 1) / chunk;
  std::vector<Outcome> outcomes(examples.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        const std::size_t begin = c * chunk, end = std::min(examples.size(), begin + chunk);
        std::vector<std::vector<int>> histories;
        std::vector<Rng> rngs;
        for (std::size_t i = begin; i < end; ++i) {
          histories.push_back(examples[i].history);
          rngs.emplace_back(mix_seed(options.seed, i));
        }
        const auto scored = model.score_batch(histories, rngs);
        for (std::size_t i = begin; i < end; ++i) {
          const auto& ex = examples[i];
          std::span<const int> excluded;
          if (options.mask_history) excluded = ex.history;
          outcomes[i] = {i, rank_of(scored[i - begin].scores, ex.target, excluded), ex.history.size(), ex.target};
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n_chunks;
        return;
      }
    }
  };

  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_chunks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return outcomes;
}

EvalReport summarize(std::span<const Outcome> outcomes, const std::vector<int>& cutoffs, std::string label) {
  EvalReport report;
  report.label = std::move(label);
  report.n_evaluated = outcomes.size();
  for (int k : cutoffs) {
    double hr = 0.0, ndcg = 0.0;
    for (const auto& o : outcomes) {
      const auto m = metric_single(o.rank, k);
      hr += m.hr;
      ndcg += m.ndcg;
    }
    const double n = outcomes.empty() ? 1.0 : static_cast<double>(outcomes.size());
    report.hr[k] = hr / n;
    report.ndcg[k] = ndcg / n;
  }
  return report;
}

EvalReport evaluate(const Recommender& model, std::span<const Example> examples, const EvalOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto outcomes = rank_targets(model, examples, options);
  auto report = summarize(outcomes, options.cutoffs);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<int> head_items(std::span<const std::size_t> frequencies, double fraction) {
  if (frequencies.size() < 2) return {};
  const std::size_t n_items = frequencies.size() - 1;
  const auto n_head =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_items))));
  auto ranked = popularity_ranking(frequencies);
  ranked.resize(std::min(n_head, ranked.size()));
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

HeadTailReport head_tail_report(std::span<const Outcome> outcomes, std::span<const std::size_t> frequencies,
                                const std::vector<int>& cutoffs) {
  HeadTailReport out;
  out.head_items = head_items(frequencies);
  std::vector<Outcome> head, tail;
  for (const auto& o : outcomes) {
    const bool is_head = std::binary_search(out.head_items.begin(), out.head_items.end(), o.target);
    (is_head ? head : tail).push_back(o);
  }
  out.head = summarize(head, cutoffs, "head");
  out.tail = summarize(tail, cutoffs, "tail");
  return out;
}

std::size_t percentile(std::vector<std::size_t> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(p > 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

LengthBucketReport length_bucket_report(std::span<const Outcome> outcomes, const std::vector<int>& cutoffs) {
  LengthBucketReport out;
  if (outcomes.size() < 5) {
    out.warning = "fewer than 5 evaluated sequences; reporting a single length bucket";
    out.buckets.push_back(summarize(outcomes, cutoffs, "len:all"));
    return out;
  }
  std::vector<std::size_t> lengths;
  for (const auto& o : outcomes) lengths.push_back(o.history_length);
  for (double p : {20.0, 40.0, 60.0, 80.0}) out.boundaries.push_back(percentile(lengths, p));

  std::vector<std::vector<Outcome>> parts(5);
  for (const auto& o : outcomes) {
    std::size_t k = 0;
    while (k < 4 && o.history_length > out.boundaries[k]) ++k;
    parts[k].push_back(o);
  }
  for (std::size_t k = 0; k < 5; ++k) {
    std::string label;
    if (k == 0) {
      label = "len<=" + std::to_string(out.boundaries[0]);
    } else if (k == 4) {
      label = "len>" + std::to_string(out.boundaries[3]);
    } else {
      label = std::to_string(out.boundaries[k - 1]) + "<len<=" + std::to_string(out.boundaries[k]);
    }
    out.buckets.push_back(summarize(parts[k], cutoffs, label));
  }
  return out;
}

UncertaintyProbe uncertainty_probe(const Recommender& model, const std::vector<int>& history, int n_reverses, int k,
                                   std::uint64_t base_seed) {
  if (n_reverses < 1) throw std::invalid_argument("probe needs at least one reverse");
  if (k < 1) throw std::invalid_argument("probe cutoff K must be >= 1");
  UncertaintyProbe probe;
  probe.n_reverses = n_reverses;
  probe.k = k;
  std::vector<std::vector<int>> histories(static_cast<std::size_t>(n_reverses), history);
  std::vector<Rng> rngs;
  for (int r = 0; r < n_reverses; ++r) rngs.emplace_back(base_seed + static_cast<std::uint64_t>(r));
  const auto scored = model.score_batch(histories, rngs);
  std::set<int> seen;
  for (const auto& s : scored) {
    auto ranked = rank_items(s.scores);
    ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k)));
    seen.insert(ranked.begin(), ranked.end());
    probe.top_k.push_back(std::move(ranked));
    probe.representations.push_back(s.representation);
  }
  probe.unique_item_count = seen.size();
  return probe;
}

std::vector<int> popularity_ranking(std::span<const std::size_t> frequencies) {
  if (frequencies.size() < 2) return {};
  std::vector<double> scores(frequencies.begin() + 1, frequencies.end());
  return rank_items(scores);
}

PopularityModel::PopularityModel(std::vector<std::size_t> frequencies) : frequencies_(std::move(frequencies)) {
  if (frequencies_.size() < 2) throw std::invalid_argument("popularity model needs at least one item");
}

std::vector<Scored> PopularityModel::score_batch(std::span<const std::vector<int>> histories, std::span<Rng>) const {
  std::vector<double> scores(frequencies_.begin() + 1, frequencies_.end());
  return std::vector<Scored>(histories.size(), Scored{scores, Tensor()});
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "metric,K,value,bucket\n";
  char buf[64];
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.hr) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      out << "HR," << k << ',' << buf << ',' << r.label << '\n';
    }
    for (const auto& [k, v] : r.ndcg) {
      std::snprintf(buf, sizeof buf, "%.10g", v);
      out << "NDCG," << k << ',' << buf << ',' << r.label << '\n';
    }
    out << "n_evaluated,0," << r.n_evaluated << ',' << r.label << '\n';
  }
  return out.str();
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  std::set<int> cutoffs;
  std::size_t label_w = 6;
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.hr) cutoffs.insert(k);
    label_w = std::max(label_w, r.label.size());
  }
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  std::string header = pad("bucket", label_w) + pad("n", 8);
  for (int k : cutoffs) header += pad("HR@" + std::to_string(k), 11) + pad("NDCG@" + std::to_string(k), 11);
  out << header << '\n' << std::string(header.size(), '-') << '\n';
  for (const auto& r : reports) {
    out << pad(r.label, label_w) << pad(std::to_string(r.n_evaluated), 8);
    for (int k : cutoffs) {
      if (r.empty()) {
        out << pad("-", 11) << pad("-", 11);
      } else {
        out << pad(fmt(r.hr.count(k) ? r.hr.at(k) : 0.0), 11) << pad(fmt(r.ndcg.count(k) ? r.ndcg.at(k) : 0.0), 11);
      }
    }
    out << (r.empty() ? "  (empty)" : "") << '\n';
  }
  return out.str();
}

bool report_consistent(const EvalReport& report) {
  double prev_hr = 0.0;
  for (const auto& [k, hr] : report.hr) {
    const auto it = report.ndcg.find(k);
    if (it == report.ndcg.end()) return false;
    const double ndcg = it->second;
    if (!(ndcg >= 0.0 && ndcg <= hr + 1e-15 && hr <= 1.0)) return false;
    if (hr + 1e-15 < prev_hr) return false;
    prev_hr = hr;
  }
  return true;
}

std::string probe_csv(const UncertaintyProbe& probe) {
  std::ostringstream out;
  std::size_t dim = 0;
  for (const auto& r : probe.representations) dim = std::max(dim, r.size());
  out << "reverse,top_k";
  for (std::size_t j = 0; j < dim; ++j) out << ",x" << j;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < probe.top_k.size(); ++r) {
    out << r << ',';
    for (std::size_t i = 0; i < probe.top_k[r].size(); ++i) out << (i ? " " : "") << probe.top_k[r][i];
    if (r < probe.representations.size()) {
      for (double v : probe.representations[r].data()) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace diffurec
