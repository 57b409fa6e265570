#include "settings.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <utility>

namespace slim::cli {

namespace {

using Entries = std::vector<std::pair<const char*, const char*>>;

const Entries kRun = {
    {"run.seed", "0"},
    {"run.out_dir", "out"},
    {"run.record_timing", "false"},
};

const Entries kProtocol = {
    {"protocol.fit_size", "10000"},   {"protocol.test_size", "100"},
    {"protocol.repeats", "1000"},     {"protocol.significance", "0.05"},
    {"protocol.permutations", "200"}, {"protocol.independent", "false"},
};

const Entries kSlice = {
    {"slice.count", "200"},
    {"slice.order", "3"},
    {"slice.ridge", "1e-4"},
};

const Entries kRenyi = {
    {"renyi.hidden", "64,64"},       {"renyi.activation", "relu"}, {"renyi.dropout", "0.2"},
    {"renyi.learning_rate", "1e-3"}, {"renyi.batch_size", "128"},  {"renyi.max_epochs", "500"},
    {"renyi.patience", "10"},        {"renyi.validation_fraction", "0.2"},
};

const Entries kData = {
    {"data.synthetic", "fairness-toy"},
    {"data.csv", ""},
    {"data.schema", ""},
    {"data.standardize", "true"},
    {"data.rows", "25000"},
    {"data.train_size", "20000"},
    {"data.test_size", "5000"},
    {"toy.latent_dim", "4"},
    {"toy.protected_dim", "1"},
    {"toy.x_dim", "10"},
    {"toy.x_noise", "0.05"},
    {"toy.y_noise", "0.1"},
    {"toy.protected_is_noise", "false"},
};

const Entries kPower = {
    {"power.patterns", "linear,square,sin,tanh"},
    {"power.alphas", "0.2,0.4,0.6,0.8,0.999"},
    {"power.methods", "slice,pearson,dcorr,neural_renyi,optimal"},
    {"power.checkpoint", ""},
};

const Entries kAblate = {
    {"ablate.slice_grid", "10,25,50,100,200,400"},
    {"ablate.pattern", "sin"},
    {"ablate.alpha", "0.4"},
    {"ablate.seeds", "1"},
};

const Entries kTrain = {
    {"train.beta", "1"},
    {"train.beta_grid", ""},
    {"train.n_prime", "5000"},
    {"train.iterations", "1000"},
    {"train.batch_size", "256"},
    {"train.learning_rate", "1e-3"},
    {"train.optimizer", "adam"},
    {"train.utility", "regression-mse"},
    {"train.tolerance", "0.05"},
    {"refine.enabled", "false"},
    {"refine.threshold", "0.1"},
    {"refine.step", "0.5"},
    {"refine.steps", "1"},
    {"net.encoder_hidden", "64,64"},
    {"net.z_dim", "8"},
    {"net.head_hidden", "32"},
};

const Entries kEval = {
    {"eval.checkpoint", ""},
    {"eval.permutations", "100"},
    {"eval.significance", "0.05"},
};

void add(Config& c, const Entries& entries) {
  for (const auto& [k, v] : entries) c.set(k, v);
}

Config manifest_config(const std::string& command, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot read manifest " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("manifest " + path + " is not valid JSON: " + e.what());
  }
  if (j.value("command", std::string()) != command)
    throw UsageError("manifest " + path + " was written by '" + j.value("command", std::string("?")) +
                     "', not '" + command + "'");
  if (!j.contains("config") || !j["config"].is_object()) throw UsageError("manifest " + path + " has no config");
  Config c;
  for (const auto& [k, v] : j["config"].items()) c.set(k, v.get<std::string>());
  return c;
}

}  // namespace

Config command_defaults(const std::string& command) {
  Config c;
  add(c, kRun);
  if (command == "power") {
    add(c, kPower);
    add(c, kProtocol);
    add(c, kSlice);
    add(c, kRenyi);
  } else if (command == "ablate") {
    add(c, kAblate);
    add(c, kProtocol);
    add(c, kSlice);
  } else if (command == "train") {
    add(c, kData);
    add(c, kTrain);
    add(c, kSlice);
    add(c, kRenyi);
  } else if (command == "eval") {
    add(c, kData);
    add(c, kEval);
    add(c, kSlice);
    add(c, kRenyi);
  } else {
    throw UsageError("unknown command '" + command + "'");
  }
  return c;
}

Config resolve(const std::string& command, const Sources& sources) {
  Config c = command_defaults(command);
  auto layer = [&](const Config& extra, const std::string& origin) {
    for (const auto& [k, v] : extra.values()) {
      if (!c.has(k)) throw UsageError(origin + ": unknown key '" + k + "' for command '" + command + "'");
      c.set(k, v);
    }
  };
  if (sources.manifest) layer(manifest_config(command, *sources.manifest), *sources.manifest);
  if (sources.config_file) {
    if (!std::filesystem::exists(*sources.config_file))
      throw UsageError("config file not found: " + *sources.config_file);
    try {
      layer(Config::from_ini_file(*sources.config_file), *sources.config_file);
    } catch (const SchemaError& e) {
      throw UsageError(e.what());
    }
  }
  Config sets;
  for (const auto& a : sources.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects section.key=value, got '" + a + "'");
    sets.set(a.substr(0, eq), a.substr(eq + 1));
  }
  layer(sets, "--set");
  Config flags;
  for (const auto& [k, v] : sources.flag_values) flags.set(k, v);
  layer(flags, "command line");
  return c;
}

}  // namespace slim::cli
