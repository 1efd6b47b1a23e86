#include "attnmixer/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace attnmixer {

namespace {

using nlohmann::json;

json config_to_json(const MixerConfig& c) {
  return json{{"T", c.window},
              {"D", c.variates},
              {"K", c.rounds},
              {"gru_hidden", c.gru_hidden},
              {"smpr_mode", to_string(c.smpr_mode)},
              {"lambda", c.lambda},
              {"tie_qk", c.tie_qk},
              {"disable_samp", c.disable_samp},
              {"disable_tamp", c.disable_tamp},
              {"seed", c.seed}};
}

MixerConfig config_from_json(const json& j) {
  MixerConfig c;
  c.window = j.at("T").get<int>();
  c.variates = j.at("D").get<int>();
  c.rounds = j.at("K").get<int>();
  c.gru_hidden = j.at("gru_hidden").get<int>();
  c.smpr_mode = smpr_mode_from_string(j.at("smpr_mode").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.tie_qk = j.at("tie_qk").get<bool>();
  c.disable_samp = j.at("disable_samp").get<bool>();
  c.disable_tamp = j.at("disable_tamp").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json tensor_to_json(const Tensor& t) {
  return json{{"shape", {t.rows(), t.cols()}}, {"data", t.values()}};
}

void tensor_from_json(const json& j, const std::string& name, Tensor& t) {
  const auto& shape = j.at("shape");
  const int rows = shape.at(0).get<int>();
  const int cols = shape.at(1).get<int>();
  if (rows != t.rows() || cols != t.cols()) {
    throw DimensionError("checkpoint parameter '" + name + "' has shape " +
                         std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                         std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
  }
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != t.values().size()) {
    throw DimensionError("checkpoint parameter '" + name + "' has " +
                         std::to_string(data.size()) + " values, expected " +
                         std::to_string(t.values().size()));
  }
  t.mutable_values() = std::move(data);
}

}  // namespace

void save_checkpoint(const std::string& path, const MixerConfig& config,
                     MixerParams& params, const AdamState* adam) {
  json j;
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(config);
  json p = json::object();
  auto list = params.parameters();
  for (const auto& param : list) p[param.name] = tensor_to_json(param.tensor);
  j["params"] = std::move(p);
  if (adam != nullptr && adam->initialized()) {
    json a;
    a["step"] = adam->step;
    json m = json::object(), v = json::object();
    for (size_t i = 0; i < list.size(); ++i) {
      m[list[i].name] = adam->m[i];
      v[list[i].name] = adam->v[i];
    }
    a["m"] = std::move(m);
    a["v"] = std::move(v);
    j["adam"] = std::move(a);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint '" + path + "': " + e.what());
  }
  const std::string version = j.value("version", "");
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint '" + path + "' has version '" + version + "', expected '" +
                      std::string(kCheckpointVersion) + "'");
  }
  Checkpoint ckpt;
  ckpt.config = config_from_json(j.at("config"));
  ckpt.params = init_params(ckpt.config);
  auto list = ckpt.params.parameters();
  const auto& params_json = j.at("params");
  for (auto& param : list) {
    const auto it = params_json.find(param.name);
    if (it == params_json.end()) {
      throw DataError("checkpoint '" + path + "' is missing parameter '" + param.name + "'");
    }
    tensor_from_json(*it, param.name, param.tensor);
  }
  if (j.contains("adam")) {
    AdamState adam;
    adam.init(list);
    const auto& a = j.at("adam");
    adam.step = a.at("step").get<std::int64_t>();
    for (size_t i = 0; i < list.size(); ++i) {
      adam.m[i] = a.at("m").at(list[i].name).get<std::vector<double>>();
      adam.v[i] = a.at("v").at(list[i].name).get<std::vector<double>>();
      if (adam.m[i].size() != list[i].tensor.values().size() ||
          adam.v[i].size() != list[i].tensor.values().size()) {
        throw DimensionError("checkpoint adam state for '" + list[i].name +
                             "' does not match the parameter shape");
      }
    }
    ckpt.adam = std::move(adam);
  }
  return ckpt;
}

void require_compatible(const MixerConfig& loaded, const MixerConfig& expected) {
  const auto mismatch = [](const std::string& field, auto a, auto b) {
    throw ConfigError("checkpoint/config mismatch on " + field + ": checkpoint has " +
                      std::to_string(a) + ", expected " + std::to_string(b));
  };
  if (loaded.window != expected.window) mismatch("T", loaded.window, expected.window);
  if (loaded.variates != expected.variates) mismatch("D", loaded.variates, expected.variates);
  if (loaded.rounds != expected.rounds) mismatch("K", loaded.rounds, expected.rounds);
  if (loaded.gru_hidden != expected.gru_hidden) {
    mismatch("gru_hidden", loaded.gru_hidden, expected.gru_hidden);
  }
}

}  // namespace attnmixer
