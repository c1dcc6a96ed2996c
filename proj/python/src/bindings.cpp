#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "diffurec/checkpoint.hpp"
#include "diffurec/errors.hpp"
#include "diffurec/eval.hpp"

namespace py = pybind11;
using namespace diffurec;

namespace {

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["label"] = r.label;
  d["hr"] = r.hr;
  d["ndcg"] = r.ndcg;
  d["n_evaluated"] = r.n_evaluated;
  d["seconds"] = r.seconds;
  return d;
}

const std::vector<Example>& pick_split(const DatasetSplit& parts, const std::string& name) {
  if (name == "test") return parts.test;
  if (name == "validation") return parts.validation;
  throw std::invalid_argument("split must be 'test' or 'validation', got '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_diffurec, m) {
  m.doc() = "Diffusion sequential recommender core";

  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def(py::init([](const std::string& kind, int steps, double a, double b, double tau) {
             return NoiseSchedule::build(parse_schedule_kind(kind), steps, a, b, tau);
           }),
           py::arg("kind") = "truncated-linear", py::arg("steps") = 32, py::arg("a") = 0.2, py::arg("b") = 0.008,
           py::arg("tau") = 1.0)
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def_property_readonly("betas", [](const NoiseSchedule& s) {
        return std::vector<double>(s.betas().begin() + 1, s.betas().end());
      })
      .def_property_readonly("alpha_bars", [](const NoiseSchedule& s) {
        return std::vector<double>(s.alpha_bars().begin() + 1, s.alpha_bars().end());
      })
      .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("s"))
      .def("posterior",
           [](const NoiseSchedule& s, int k) {
             const auto p = s.posterior(k);
             return py::make_tuple(p.coef_x0, p.coef_xs, p.beta_tilde);
           },
           py::arg("s"), "(coef_x0, coef_xs, beta_tilde) for step s")
      .def("to_csv", &schedule_csv);

  m.def(
      "metric_single",
      [](std::size_t rank, int k) {
        const auto r = metric_single(rank, k);
        return py::make_tuple(r.hr, r.ndcg);
      },
      py::arg("rank"), py::arg("k"));

  py::class_<SequenceDataset>(m, "Dataset")
      .def_readonly("sequences", &SequenceDataset::sequences)
      .def_property_readonly("n_items", &SequenceDataset::n_items)
      .def_property_readonly("n_actions", &SequenceDataset::n_actions)
      .def("save", &write_dataset, py::arg("directory"))
      .def_static("load", &read_dataset, py::arg("directory"), py::arg("max_len") = 50)
      .def("__len__", [](const SequenceDataset& d) { return d.sequences.size(); });

  m.def(
      "synth",
      [](const std::string& kind, int users, int items, int length, std::uint64_t seed) {
        return synth(parse_synth_kind(kind), users, items, length, seed);
      },
      py::arg("kind"), py::arg("users"), py::arg("items"), py::arg("length"), py::arg("seed") = 0);

  m.def(
      "preprocess",
      [](const std::string& path, int min_count, int max_len, bool kcore_iterate) {
        return preprocess(ingest(path), PreprocessOptions{min_count, max_len, kcore_iterate});
      },
      py::arg("path"), py::arg("min_count") = 5, py::arg("max_len") = 50, py::arg("kcore_iterate") = false);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("desk", &TrainConfig::desk)
      .def_static("parse", &TrainConfig::parse, py::arg("text"))
      .def("serialize", &TrainConfig::serialize)
      .def("validate", &TrainConfig::validate)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("steps", &TrainConfig::steps)
      .def_readwrite("delta", &TrainConfig::delta)
      .def_readwrite("dim", &TrainConfig::dim)
      .def_readwrite("blocks", &TrainConfig::blocks)
      .def_readwrite("heads", &TrainConfig::heads)
      .def_readwrite("max_len", &TrainConfig::max_len)
      .def_readwrite("dropout_block", &TrainConfig::dropout_block)
      .def_readwrite("dropout_embed", &TrainConfig::dropout_embed)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("epsilon_adv", &TrainConfig::epsilon_adv)
      .def_readwrite("gamma", &TrainConfig::gamma)
      .def_readwrite("eval_every", &TrainConfig::eval_every)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_property(
          "schedule", [](const TrainConfig& c) { return to_string(c.schedule); },
          [](TrainConfig& c, const std::string& k) { c.schedule = parse_schedule_kind(k); })
      .def_property(
          "mode", [](const TrainConfig& c) { return to_string(c.mode); },
          [](TrainConfig& c, const std::string& k) { c.mode = parse_train_mode(k); })
      .def("__repr__", [](const TrainConfig& c) { return "TrainConfig(\n" + c.serialize() + ")"; });

  py::class_<ModelCheckpoint>(m, "Checkpoint")
      .def_readonly("config", &ModelCheckpoint::config)
      .def_readonly("n_items", &ModelCheckpoint::n_items)
      .def_readonly("epoch", &ModelCheckpoint::epoch)
      .def("save", &save_checkpoint, py::arg("path"))
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("to_bytes", [](const ModelCheckpoint& c) { return py::bytes(serialize_checkpoint(c)); })
      .def_static("from_bytes", [](const py::bytes& b) { return deserialize_checkpoint(std::string(b)); });

  m.def(
      "train",
      [](const SequenceDataset& data, const TrainConfig& config) {
        py::gil_scoped_release release;
        Rng rng(config.seed);
        return train(data, config, rng).checkpoint;
      },
      py::arg("data"), py::arg("config"), "Trains with early stopping on the validation split; seeded by config.seed.");

  m.def(
      "infer",
      [](const ModelCheckpoint& ckpt, const std::vector<int>& sequence, std::uint64_t seed, int steps) {
        Rng rng(seed);
        return infer(ckpt, sequence, steps, rng);
      },
      py::arg("checkpoint"), py::arg("sequence"), py::arg("seed") = 0, py::arg("steps") = 0,
      "Full item ranking (best first) for one history.");

  m.def(
      "evaluate",
      [](const ModelCheckpoint& ckpt, const SequenceDataset& data, const std::string& split_name, std::uint64_t seed,
         std::vector<int> cutoffs, bool mask_history, int steps) {
        const auto parts = split(data);
        const auto& examples = pick_split(parts, split_name);
        py::gil_scoped_release release;
        const auto model = make_recommender(ckpt, steps);
        EvalOptions opt;
        opt.seed = seed;
        opt.cutoffs = std::move(cutoffs);
        opt.mask_history = mask_history;
        opt.threads = 0;
        const auto report = evaluate(*model, examples, opt);
        py::gil_scoped_acquire acquire;
        return report_dict(report);
      },
      py::arg("checkpoint"), py::arg("data"), py::arg("split") = "test", py::arg("seed") = 0,
      py::arg("cutoffs") = kDefaultCutoffs, py::arg("mask_history") = false, py::arg("steps") = 0);

  m.def(
      "popularity_evaluate",
      [](const SequenceDataset& data, const std::string& split_name, std::vector<int> cutoffs) {
        const auto parts = split(data);
        const PopularityModel pop(item_frequencies(parts, data.n_items()));
        EvalOptions opt;
        opt.cutoffs = std::move(cutoffs);
        return report_dict(evaluate(pop, pick_split(parts, split_name), opt));
      },
      py::arg("data"), py::arg("split") = "test", py::arg("cutoffs") = kDefaultCutoffs);

  m.def(
      "uncertainty_probe",
      [](const ModelCheckpoint& ckpt, const std::vector<int>& sequence, int n, int k, std::uint64_t base_seed) {
        const auto model = make_recommender(ckpt);
        const auto probe = uncertainty_probe(*model, sequence, n, k, base_seed);
        py::dict d;
        d["unique_item_count"] = probe.unique_item_count;
        d["top_k"] = probe.top_k;
        std::vector<std::vector<double>> reps;
        for (const auto& r : probe.representations) reps.emplace_back(r.data().begin(), r.data().end());
        d["representations"] = reps;
        return d;
      },
      py::arg("checkpoint"), py::arg("sequence"), py::arg("n") = 100, py::arg("k") = 20, py::arg("base_seed") = 0);
}
