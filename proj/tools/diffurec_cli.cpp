#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "diffurec/checkpoint.hpp"
#include "diffurec/config.hpp"
#include "diffurec/data.hpp"
#include "diffurec/errors.hpp"
#include "diffurec/eval.hpp"
#include "diffurec/pipeline.hpp"
#include "diffurec/schedule.hpp"

namespace fs = std::filesystem;
using namespace diffurec;

namespace {

std::vector<int> parse_sequence(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    const auto b = tok.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    std::size_t used = 0;
    const int v = std::stoi(tok.substr(b), &used);
    if (used != tok.size() - b) throw std::invalid_argument("bad item index '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--sequence is empty");
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

SequenceDataset load_data(const std::string& path, int max_len) {
  if (fs::is_directory(path)) return read_dataset(path, max_len);
  PreprocessOptions opts;
  opts.max_len = max_len;
  return preprocess(ingest(path), opts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion sequential recommender: training, inference and evaluation"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  std::string train_data, train_config, train_out, train_log;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  train_cmd->add_option("--data", train_data, "Dataset directory (sequences.txt + items.tsv) or raw TSV")->required();
  train_cmd->add_option("--config", train_config, "key = value config file (defaults when omitted)");
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Random seed (overrides the config)");
  train_cmd->add_option("--log", train_log, "Per-epoch loss CSV");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Rank items for one history");
  std::string infer_ckpt, infer_seq;
  int infer_steps = 0, infer_topk = 10;
  std::uint64_t infer_seed = 0;
  infer_cmd->add_option("--ckpt", infer_ckpt)->required();
  infer_cmd->add_option("--sequence", infer_seq, "Comma-separated item indices, oldest first")->required();
  infer_cmd->add_option("--steps", infer_steps, "Reverse steps t (0 = trained horizon)");
  infer_cmd->add_option("--seed", infer_seed);
  infer_cmd->add_option("--topk", infer_topk)->check(CLI::PositiveNumber);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Full-ranking HR@K / NDCG@K");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
  int eval_steps = 0;
  unsigned eval_threads = 1;
  std::uint64_t eval_seed = 0;
  bool eval_head_tail = false, eval_buckets = false, eval_mask = false, eval_popularity = false;
  eval_cmd->add_option("--ckpt", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"test", "validation"}));
  eval_cmd->add_option("--steps", eval_steps, "Reverse steps t (0 = trained horizon)");
  eval_cmd->add_option("--seed", eval_seed);
  eval_cmd->add_option("--threads", eval_threads, "Worker threads (0 = all cores)");
  eval_cmd->add_flag("--head-tail", eval_head_tail);
  eval_cmd->add_flag("--length-buckets", eval_buckets);
  eval_cmd->add_flag("--mask-history", eval_mask);
  eval_cmd->add_flag("--popularity", eval_popularity, "Also report the popularity baseline");
  eval_cmd->add_option("--out", eval_out, "CSV report path");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Repeated reverses of one history");
  std::string probe_ckpt, probe_seq, probe_out;
  int probe_n = 100, probe_k = 20, probe_steps = 0;
  std::uint64_t probe_seed = 0;
  probe_cmd->add_option("--ckpt", probe_ckpt)->required();
  probe_cmd->add_option("--sequence", probe_seq)->required();
  probe_cmd->add_option("--n", probe_n)->check(CLI::PositiveNumber);
  probe_cmd->add_option("--topk", probe_k)->check(CLI::PositiveNumber);
  probe_cmd->add_option("--steps", probe_steps);
  probe_cmd->add_option("--seed", probe_seed, "Base seed; reverse r uses seed + r");
  probe_cmd->add_option("--out", probe_out, "CSV with each reverse's top-K and x_0");

  // schedule-dump
  auto* sched_cmd = app.add_subcommand("schedule-dump", "Write a noise schedule as CSV");
  std::string sched_kind = "truncated-linear", sched_out;
  ScheduleParams sched;
  bool sched_b_constant = false;
  sched_cmd->add_option("--kind", sched_kind)->check(CLI::IsMember({"truncated-linear", "linear", "cosine", "sqrt"}));
  sched_cmd->add_option("--t", sched.steps)->check(CLI::PositiveNumber);
  sched_cmd->add_option("--a", sched.a);
  sched_cmd->add_option("--b", sched.b);
  sched_cmd->add_option("--tau", sched.tau);
  sched_cmd->add_flag("--b-constant", sched_b_constant);
  sched_cmd->add_option("--out", sched_out, "CSV path (stdout when omitted)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_kind = "cyclic", synth_out;
  int synth_users = 1000, synth_items = 50, synth_len = 20;
  std::uint64_t synth_seed = 7;
  synth_cmd->add_option("--kind", synth_kind)->check(CLI::IsMember({"cyclic", "markov"}));
  synth_cmd->add_option("--users", synth_users);
  synth_cmd->add_option("--items", synth_items);
  synth_cmd->add_option("--len", synth_len);
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--out", synth_out)->required();

  // preprocess
  auto* prep_cmd = app.add_subcommand("preprocess", "Filter and index a raw interaction TSV");
  std::string prep_in, prep_out;
  PreprocessOptions prep;
  prep_cmd->add_option("--in", prep_in)->required();
  prep_cmd->add_option("--out", prep_out)->required();
  prep_cmd->add_option("--min-count", prep.min_count)->check(CLI::PositiveNumber);
  prep_cmd->add_option("--max-len", prep.max_len)->check(CLI::PositiveNumber);
  prep_cmd->add_flag("--kcore-iterate", prep.kcore_iterate, "Repeat filtering until nothing changes");

  CLI11_PARSE(app, argc, argv);
  train_seed_set = seed_opt->count() > 0;

  try {
    if (*train_cmd) {
      TrainConfig config = train_config.empty() ? TrainConfig{} : TrainConfig::load(train_config);
      if (train_seed_set) config.seed = train_seed;
      const auto dataset = load_data(train_data, config.max_len);
      std::ofstream log;
      if (!train_log.empty()) {
        log.open(train_log);
        log << "epoch,mean_loss,validation_hr10,validation_ndcg10\n";
      }
      Rng rng(config.seed);
      const auto result = train(dataset, config, rng, [&](const EpochLog& e) {
        std::printf("epoch %3d  loss %.6f", e.epoch, e.mean_loss);
        if (e.validation_hr10) std::printf("  valid HR@10 %.4f NDCG@10 %.4f", *e.validation_hr10, *e.validation_ndcg10);
        std::printf("\n");
        std::fflush(stdout);
        if (log.is_open()) {
          log << e.epoch << ',' << e.mean_loss << ',';
          if (e.validation_hr10) log << *e.validation_hr10 << ',' << *e.validation_ndcg10;
          else log << ',';
          log << '\n';
        }
      });
      save_checkpoint(result.checkpoint, train_out);
      std::printf("saved epoch %d checkpoint to %s\n", result.checkpoint.epoch, train_out.c_str());
    } else if (*infer_cmd) {
      const auto ckpt = load_checkpoint(infer_ckpt);
      const auto model = make_recommender(ckpt, infer_steps);
      Rng rng(infer_seed);
      const auto scored = model->score(parse_sequence(infer_seq), rng);
      const auto ranked = rank_items(scored.scores);
      std::printf("rank\titem\tscore\n");
      for (int r = 0; r < std::min<int>(infer_topk, static_cast<int>(ranked.size())); ++r)
        std::printf("%d\t%d\t%.6f\n", r + 1, ranked[static_cast<std::size_t>(r)],
                    scored.scores[static_cast<std::size_t>(ranked[static_cast<std::size_t>(r)] - 1)]);
    } else if (*eval_cmd) {
      const auto ckpt = load_checkpoint(eval_ckpt);
      const auto dataset = load_data(eval_data, ckpt.config.max_len);
      if (static_cast<int>(dataset.n_items()) != ckpt.n_items)
        throw std::invalid_argument("dataset has " + std::to_string(dataset.n_items()) + " items, checkpoint " +
                                    std::to_string(ckpt.n_items));
      const auto parts = split(dataset);
      if (parts.excluded) std::fprintf(stderr, "warning: %zu sequences shorter than 3 excluded\n", parts.excluded);
      const auto& examples = eval_split == "test" ? parts.test : parts.validation;
      const auto model = make_recommender(ckpt, eval_steps);
      EvalOptions opts;
      opts.seed = eval_seed;
      opts.mask_history = eval_mask;
      opts.threads = eval_threads;
      const auto outcomes = rank_targets(*model, examples, opts);
      std::vector<EvalReport> reports{summarize(outcomes)};
      const auto freq = item_frequencies(parts, dataset.n_items());
      if (eval_head_tail) {
        const auto ht = head_tail_report(outcomes, freq);
        reports.push_back(ht.head);
        reports.push_back(ht.tail);
      }
      if (eval_buckets) {
        auto lb = length_bucket_report(outcomes);
        if (lb.warning) std::fprintf(stderr, "warning: %s\n", lb.warning->c_str());
        reports.insert(reports.end(), lb.buckets.begin(), lb.buckets.end());
      }
      if (eval_popularity) {
        PopularityModel pop(freq);
        auto r = evaluate(pop, examples, opts);
        r.label = "popularity";
        reports.push_back(r);
      }
      std::fputs(report_table(reports).c_str(), stdout);
      if (!eval_out.empty()) write_file(eval_out, report_csv(reports));
    } else if (*probe_cmd) {
      const auto ckpt = load_checkpoint(probe_ckpt);
      const auto model = make_recommender(ckpt, probe_steps);
      const auto probe = uncertainty_probe(*model, parse_sequence(probe_seq), probe_n, probe_k, probe_seed);
      std::printf("reverses %d  K %d  unique items in top-K union %zu\n", probe.n_reverses, probe.k,
                  probe.unique_item_count);
      if (!probe_out.empty()) write_file(probe_out, probe_csv(probe));
    } else if (*sched_cmd) {
      sched.kind = parse_schedule_kind(sched_kind);
      sched.b_constant = sched_b_constant;
      const auto csv = schedule_csv(NoiseSchedule::build(sched));
      if (sched_out.empty()) std::fputs(csv.c_str(), stdout);
      else write_file(sched_out, csv);
    } else if (*synth_cmd) {
      const auto ds = synth(parse_synth_kind(synth_kind), synth_users, synth_items, synth_len, synth_seed);
      write_dataset(ds, synth_out);
      std::printf("wrote %zu sequences over %zu items to %s\n", ds.sequences.size(), ds.n_items(), synth_out.c_str());
    } else if (*prep_cmd) {
      const auto ds = preprocess(ingest(prep_in), prep);
      write_dataset(ds, prep_out);
      std::printf("sequences %zu  items %zu  actions %zu (before truncation %zu)  average length %.2f\n",
                  ds.sequences.size(), ds.n_items(), ds.n_actions(), ds.actions_before_truncation,
                  ds.average_length());
    }
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "training failed: %s (epoch %d, batch %zu, loss %g)\n", e.what(), e.epoch(), e.batch(),
                 e.loss());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
