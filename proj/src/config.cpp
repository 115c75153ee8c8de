#include "fedsvm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "fedsvm/error.hpp"

namespace fedsvm {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"dataset",
       {"kind", "num_clients", "num_classes", "feature_dim", "samples_mean",
        "samples_spread", "dirichlet_alpha", "class_separation", "noise_sigma", "seed",
        "images", "labels", "file"}},
      {"model", {"embedding_dim", "hidden"}},
      {"client", {"epochs", "batch_size", "learning_rate", "mu", "moon_coeff",
                  "moon_temperature"}},
      {"strategy",
       {"name", "label", "server_optimizer", "server_lr", "lambda_initial",
        "lambda_floor", "lambda_schedule", "reg_steps", "reset_reg_state",
        "svm_tolerance", "svm_max_sweeps"}},
      {"experiment",
       {"rounds", "clients_per_round", "target_accuracy", "seeds", "output_dir",
        "eval_stride", "record_wall_clock", "sv_round"}},
  };
  return keys;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  bool has(const std::string& section, const std::string& key) const {
    return raw(section, key).has_value();
  }

  void string(const std::string& section, const std::string& key, std::string& out) const {
    if (auto v = raw(section, key)) out = *v;
  }

  void real(const std::string& section, const std::string& key, double& out) const {
    if (auto v = raw(section, key)) out = parse_real(section, key, *v);
  }

  void size(const std::string& section, const std::string& key, std::size_t& out) const {
    if (auto v = raw(section, key)) out = parse_size(section, key, *v);
  }

  void boolean(const std::string& section, const std::string& key, bool& out) const {
    if (auto v = raw(section, key)) {
      if (*v == "true" || *v == "1" || *v == "yes") {
        out = true;
      } else if (*v == "false" || *v == "0" || *v == "no") {
        out = false;
      } else {
        throw ConfigError(fmt::format("{}.{}: expected true or false, got '{}'",
                                      section, key, *v));
      }
    }
  }

  static double parse_real(const std::string& section, const std::string& key,
                           const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size() || !std::isfinite(v)) {
      throw ConfigError(fmt::format("{}.{}: expected a number, got '{}'", section, key,
                                    text));
    }
    return v;
  }

  static std::size_t parse_size(const std::string& section, const std::string& key,
                                const std::string& text) {
    const bool digits = !text.empty() && std::all_of(text.begin(), text.end(), [](char c) {
      return c >= '0' && c <= '9';
    });
    if (!digits || text.size() > 18) {
      throw ConfigError(fmt::format("{}.{}: expected a nonnegative integer, got '{}'",
                                    section, key, text));
    }
    return static_cast<std::size_t>(std::stoull(text));
  }

 private:
  const pt::ptree& tree_;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t heldout_count(std::size_t n) {
  if (n <= 1) return 0;
  return std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))), 1, n - 1);
}

}  // namespace

std::size_t RunConfig::training_clients() const {
  if (dataset.kind == DatasetKind::File) return 0;
  const std::size_t n = dataset.synthetic.num_clients;
  return n - heldout_count(n);
}

void apply_strategy_preset(RunConfig& config, const std::string& name) {
  auto& s = config.strategy;
  s = ServerStrategy{};
  config.client.variant = Vanilla{};
  if (name == "fedavg") {
    s.kind = ServerKind::FedAvg;
  } else if (name == "fedprox") {
    s.kind = ServerKind::FedAvg;
    config.client.variant = Prox{};
  } else if (name == "moon") {
    s.kind = ServerKind::FedAvg;
    config.client.variant = Moon{};
  } else if (name == "fedadam") {
    s.kind = ServerKind::FedOpt;
    s.optimizer = OptimizerKind::Adam;
    s.server_lr = 1e-3;
  } else if (name == "fedams") {
    s.kind = ServerKind::FedOpt;
    s.optimizer = OptimizerKind::AmsGrad;
    s.server_lr = 1e-3;
  } else if (name == "fedopt") {
    s.kind = ServerKind::FedOpt;
    s.optimizer = OptimizerKind::Sgd;
    s.server_lr = 1.0;
  } else if (name == "fedaws") {
    s.kind = ServerKind::FedAwS;
    s.optimizer = OptimizerKind::Adam;
    s.server_lr = 1e-2;
  } else if (name == "turbosvm") {
    s.kind = ServerKind::TurboSvm;
    s.optimizer = OptimizerKind::Adam;
    s.server_lr = 1e-2;
  } else {
    throw ConfigError(fmt::format(
        "strategy.name: unknown strategy '{}' (expected fedavg, fedprox, moon, fedadam, "
        "fedams, fedopt, fedaws or turbosvm)",
        name));
  }
  config.strategy_name = name;
}

void RunConfig::validate() const {
  if (dataset.kind == DatasetKind::Synthetic) dataset.synthetic.validate();
  if (dataset.kind == DatasetKind::Idx) {
    if (dataset.images.empty() || dataset.labels.empty()) {
      throw ConfigError("dataset.images and dataset.labels are required for kind = idx");
    }
    if (dataset.synthetic.num_clients < 2) {
      throw ConfigError("dataset.num_clients must be at least 2");
    }
    if (!(dataset.synthetic.dirichlet_alpha > 0.0)) {
      throw ConfigError("dataset.dirichlet_alpha must be positive");
    }
  }
  if (dataset.kind == DatasetKind::File && dataset.file.empty()) {
    throw ConfigError("dataset.file is required for kind = file");
  }
  if (model.embedding_dim == 0) throw ConfigError("model.embedding_dim must be positive");
  for (auto w : model.hidden_widths) {
    if (w == 0) throw ConfigError("model.hidden widths must be positive");
  }
  if (display_name().find_first_of(",\"\r\n") != std::string::npos) {
    throw ConfigError("strategy.label must not contain commas, quotes or line breaks");
  }
  client.validate();
  strategy.validate();
  if (rounds == 0) throw ConfigError("experiment.rounds must be at least 1");
  if (clients_per_round == 0) {
    throw ConfigError("experiment.clients_per_round must be at least 1");
  }
  if (const auto train = training_clients(); train > 0 && clients_per_round > train) {
    throw ConfigError(fmt::format(
        "experiment.clients_per_round = {} exceeds the {} training clients left by "
        "dataset.num_clients = {}",
        clients_per_round, train, dataset.synthetic.num_clients));
  }
  if (!(target_accuracy > 0.0 && target_accuracy < 1.0)) {
    throw ConfigError("experiment.target_accuracy must lie in (0, 1)");
  }
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (eval_stride == 0) throw ConfigError("experiment.eval_stride must be at least 1");
  if (sv_round && (*sv_round == 0 || *sv_round > rounds)) {
    throw ConfigError("experiment.sv_round must lie in [1, experiment.rounds]");
  }
}

RunConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }

  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) {
      throw ConfigError(fmt::format("unknown section [{}]", section));
    }
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(fmt::format("key '{}' must live inside a section", section));
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) {
        throw ConfigError(fmt::format("unknown key {}.{}", section, key));
      }
    }
  }

  const Reader r(tree);
  RunConfig c;
  std::string name = "fedavg";
  r.string("strategy", "name", name);
  apply_strategy_preset(c, name);

  // [dataset]
  if (auto kind = r.raw("dataset", "kind")) {
    if (*kind == "synthetic") {
      c.dataset.kind = DatasetKind::Synthetic;
    } else if (*kind == "idx") {
      c.dataset.kind = DatasetKind::Idx;
    } else if (*kind == "file") {
      c.dataset.kind = DatasetKind::File;
    } else {
      throw ConfigError(fmt::format(
          "dataset.kind: expected synthetic, idx or file, got '{}'", *kind));
    }
  }
  auto& spec = c.dataset.synthetic;
  r.size("dataset", "num_clients", spec.num_clients);
  r.size("dataset", "num_classes", spec.num_classes);
  r.size("dataset", "feature_dim", spec.feature_dim);
  r.real("dataset", "samples_mean", spec.samples_mean);
  r.real("dataset", "samples_spread", spec.samples_spread);
  r.real("dataset", "dirichlet_alpha", spec.dirichlet_alpha);
  r.real("dataset", "class_separation", spec.class_separation);
  r.real("dataset", "noise_sigma", spec.noise_sigma);
  if (r.has("dataset", "seed")) {
    std::size_t seed = 0;
    r.size("dataset", "seed", seed);
    spec.seed = seed;
    c.dataset.seed_from_run = false;
  }
  std::string path;
  if (r.has("dataset", "images")) { r.string("dataset", "images", path); c.dataset.images = path; }
  if (r.has("dataset", "labels")) { r.string("dataset", "labels", path); c.dataset.labels = path; }
  if (r.has("dataset", "file")) { r.string("dataset", "file", path); c.dataset.file = path; }

  // [model]
  r.size("model", "embedding_dim", c.model.embedding_dim);
  if (auto hidden = r.raw("model", "hidden")) {
    c.model.hidden_widths.clear();
    if (*hidden != "none") {
      for (const auto& item : split_list(*hidden)) {
        c.model.hidden_widths.push_back(Reader::parse_size("model", "hidden", item));
      }
    }
  }

  // [client]
  r.size("client", "epochs", c.client.epochs);
  r.size("client", "batch_size", c.client.batch_size);
  r.real("client", "learning_rate", c.client.learning_rate);
  if (r.has("client", "mu")) {
    auto* prox = std::get_if<Prox>(&c.client.variant);
    if (!prox) throw ConfigError("client.mu applies only to strategy fedprox");
    r.real("client", "mu", prox->mu);
  }
  for (const char* key : {"moon_coeff", "moon_temperature"}) {
    if (r.has("client", key) && !std::holds_alternative<Moon>(c.client.variant)) {
      throw ConfigError(fmt::format("client.{} applies only to strategy moon", key));
    }
  }
  if (auto* moon = std::get_if<Moon>(&c.client.variant)) {
    r.real("client", "moon_coeff", moon->coeff);
    r.real("client", "moon_temperature", moon->temperature);
  }

  // [strategy]
  r.string("strategy", "label", c.label);
  if (auto opt = r.raw("strategy", "server_optimizer")) {
    if (c.strategy.kind == ServerKind::FedAvg) {
      throw ConfigError(fmt::format("strategy.server_optimizer does not apply to {}", name));
    }
    try {
      c.strategy.optimizer = optimizer_kind_from_string(*opt);
    } catch (const Error& e) {
      throw ConfigError(std::string("strategy.server_optimizer: ") + e.what());
    }
  }
  r.real("strategy", "server_lr", c.strategy.server_lr);
  r.real("strategy", "lambda_initial", c.strategy.lambda.initial);
  r.real("strategy", "lambda_floor", c.strategy.lambda.floor);
  if (auto shape = r.raw("strategy", "lambda_schedule")) {
    try {
      c.strategy.lambda.shape = lambda_shape_from_string(*shape);
    } catch (const Error& e) {
      throw ConfigError(std::string("strategy.lambda_schedule: ") + e.what());
    }
  }
  r.size("strategy", "reg_steps", c.strategy.reg_steps);
  r.boolean("strategy", "reset_reg_state", c.strategy.reset_reg_state);
  r.real("strategy", "svm_tolerance", c.strategy.svm.tolerance);
  r.size("strategy", "svm_max_sweeps", c.strategy.svm.max_sweeps);
  if (c.strategy.kind != ServerKind::TurboSvm) {
    for (const char* key : {"lambda_initial", "lambda_floor", "lambda_schedule",
                            "reg_steps", "reset_reg_state", "svm_tolerance",
                            "svm_max_sweeps"}) {
      if (r.has("strategy", key)) {
        throw ConfigError(fmt::format("strategy.{} applies only to turbosvm", key));
      }
    }
  }

  // [experiment]
  r.size("experiment", "rounds", c.rounds);
  r.size("experiment", "clients_per_round", c.clients_per_round);
  r.real("experiment", "target_accuracy", c.target_accuracy);
  if (auto seeds = r.raw("experiment", "seeds")) {
    c.seeds.clear();
    for (const auto& item : split_list(*seeds)) {
      c.seeds.push_back(Reader::parse_size("experiment", "seeds", item));
    }
  }
  if (r.has("experiment", "output_dir")) {
    r.string("experiment", "output_dir", path);
    c.output_dir = path;
  }
  r.size("experiment", "eval_stride", c.eval_stride);
  r.boolean("experiment", "record_wall_clock", c.record_wall_clock);
  if (r.has("experiment", "sv_round")) {
    std::size_t v = 0;
    r.size("experiment", "sv_round", v);
    c.sv_round = v;
  }

  c.strategy.lambda.total_rounds = c.rounds;
  c.validate();
  return c;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  try {
    return parse_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace fedsvm
