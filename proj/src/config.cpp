#include "diffurec/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "diffurec/errors.hpp"

namespace diffurec {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty())
    throw ConfigError("bad value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad boolean '" + value + "' for " + key);
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    auto dbl = [](double TrainConfig::*f) {
      return [f](TrainConfig& c, const std::string& k, const std::string& v) { c.*f = parse_number<double>(k, v); };
    };
    auto integer = [](int TrainConfig::*f) {
      return [f](TrainConfig& c, const std::string& k, const std::string& v) { c.*f = parse_number<int>(k, v); };
    };
    auto boolean = [](bool TrainConfig::*f) {
      return [f](TrainConfig& c, const std::string& k, const std::string& v) { c.*f = parse_bool(k, v); };
    };
    m["learning_rate"] = dbl(&TrainConfig::learning_rate);
    m["epochs"] = integer(&TrainConfig::epochs);
    m["batch_size"] = integer(&TrainConfig::batch_size);
    m["steps"] = integer(&TrainConfig::steps);
    m["t"] = integer(&TrainConfig::steps);
    m["delta"] = dbl(&TrainConfig::delta);
    m["lambda_per_dimension"] = boolean(&TrainConfig::lambda_per_dimension);
    m["schedule"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.schedule = parse_schedule_kind(v); };
    m["schedule_a"] = dbl(&TrainConfig::schedule_a);
    m["schedule_b"] = dbl(&TrainConfig::schedule_b);
    m["schedule_tau"] = dbl(&TrainConfig::schedule_tau);
    m["schedule_b_constant"] = boolean(&TrainConfig::schedule_b_constant);
    m["dropout_block"] = dbl(&TrainConfig::dropout_block);
    m["dropout_embed"] = dbl(&TrainConfig::dropout_embed);
    m["max_len"] = integer(&TrainConfig::max_len);
    m["dim"] = integer(&TrainConfig::dim);
    m["blocks"] = integer(&TrainConfig::blocks);
    m["heads"] = integer(&TrainConfig::heads);
    m["backbone"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.backbone = parse_backbone(v); };
    m["reverse_noise_sqrt"] = boolean(&TrainConfig::reverse_noise_sqrt);
    m["seed"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.seed = parse_number<std::uint64_t>(k, v);
    };
    m["mode"] = [](TrainConfig& c, const std::string&, const std::string& v) { c.mode = parse_train_mode(v); };
    m["epsilon_adv"] = dbl(&TrainConfig::epsilon_adv);
    m["gamma"] = dbl(&TrainConfig::gamma);
    m["eval_every"] = integer(&TrainConfig::eval_every);
    m["patience"] = integer(&TrainConfig::patience);
    return m;
  }();
  return table;
}

}  // namespace

std::string to_string(TrainMode mode) {
  return mode == TrainMode::AdversarialBaseline ? "adversarial-baseline" : "diffurec";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "diffurec") return TrainMode::DiffuRec;
  if (name == "adversarial-baseline") return TrainMode::AdversarialBaseline;
  throw ConfigError("unknown mode '" + name + "' (expected diffurec or adversarial-baseline)");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.dim = 32;
  c.blocks = 2;
  c.heads = 2;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps < 1) throw ConfigError("steps (t) must be >= 1");
  if (!(delta >= 0)) throw ConfigError("delta must be >= 0");
  if (!(epsilon_adv >= 0)) throw ConfigError("epsilon_adv must be >= 0");
  if (!(gamma >= 0)) throw ConfigError("gamma must be >= 0");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  approximator(1).validate();
}

ApproximatorConfig TrainConfig::approximator(int n_items) const {
  ApproximatorConfig a;
  a.n_items = n_items;
  a.dim = dim;
  a.blocks = blocks;
  a.heads = heads;
  a.max_len = max_len;
  a.dropout_block = dropout_block;
  a.dropout_embed = dropout_embed;
  a.backbone = backbone;
  return a;
}

ScheduleParams TrainConfig::schedule_params() const {
  return {schedule, steps, schedule_a, schedule_b, schedule_tau, schedule_b_constant};
}

MixConfig TrainConfig::mix() const { return {delta, lambda_per_dimension}; }

std::string TrainConfig::serialize() const {
  std::ostringstream out;
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "learning_rate = " << fmt_double(learning_rate) << '\n'
      << "epochs = " << epochs << '\n'
      << "batch_size = " << batch_size << '\n'
      << "steps = " << steps << '\n'
      << "delta = " << fmt_double(delta) << '\n'
      << "lambda_per_dimension = " << b(lambda_per_dimension) << '\n'
      << "schedule = " << to_string(schedule) << '\n'
      << "schedule_a = " << fmt_double(schedule_a) << '\n'
      << "schedule_b = " << fmt_double(schedule_b) << '\n'
      << "schedule_tau = " << fmt_double(schedule_tau) << '\n'
      << "schedule_b_constant = " << b(schedule_b_constant) << '\n'
      << "dropout_block = " << fmt_double(dropout_block) << '\n'
      << "dropout_embed = " << fmt_double(dropout_embed) << '\n'
      << "max_len = " << max_len << '\n'
      << "dim = " << dim << '\n'
      << "blocks = " << blocks << '\n'
      << "heads = " << heads << '\n'
      << "backbone = " << to_string(backbone) << '\n'
      << "reverse_noise_sqrt = " << b(reverse_noise_sqrt) << '\n'
      << "seed = " << seed << '\n'
      << "mode = " << to_string(mode) << '\n'
      << "epsilon_adv = " << fmt_double(epsilon_adv) << '\n'
      << "gamma = " << fmt_double(gamma) << '\n'
      << "eval_every = " << eval_every << '\n'
      << "patience = " << patience << '\n';
  return out.str();
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    try {
      it->second(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

}  // namespace diffurec
