// Copyright 2026 The UME Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ume/config.h"

#include <fstream>
#include <set>

namespace ume {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(at(key), "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.get<long long>() < 0) throw ConfigError(at(key), "must be non-negative");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(at(key), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(at(key), e.what());
    }
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(at(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* selection_name(AsrSelection s) { return s == AsrSelection::kCtc ? "ctc" : "combined"; }

}  // namespace

Task parse_task(const std::string& name) {
  for (Task t : kAllTasks)
    if (name == task_name(t)) return t;
  throw std::invalid_argument("unknown task '" + name + "' (expected diar, sep or asr)");
}

json to_json(const DatasetConfig& c) {
  json overlap = {{"mode", c.overlap == OverlapMode::kFull ? "full" : "partial"}};
  if (c.overlap == OverlapMode::kPartial) overlap["min_overlap"] = c.min_overlap;
  json noise = {{"mode", c.noise == NoiseMode::kMixClean ? "mixclean" : "mixboth"}};
  if (c.noise == NoiseMode::kMixBoth) noise["snr_db"] = {c.snr_min_db, c.snr_max_db};
  return {{"num_items", c.num_items},   {"speakers", c.speakers},     {"sample_rate", c.sample_rate},
          {"token_duration", c.token_duration}, {"tokens_min", c.tokens_min}, {"tokens_max", c.tokens_max},
          {"vocab_size", c.vocab_size}, {"overlap", overlap},         {"noise", noise},
          {"seed", c.seed}};
}

DatasetConfig parse_dataset_config(const json& j, const std::string& path) {
  DatasetConfig c;
  Reader r(j, path);
  r.get("num_items", c.num_items);
  r.get("speakers", c.speakers);
  r.get("sample_rate", c.sample_rate);
  r.get("token_duration", c.token_duration);
  r.get("tokens_min", c.tokens_min);
  r.get("tokens_max", c.tokens_max);
  r.get("vocab_size", c.vocab_size);
  r.get("seed", c.seed);
  if (r.has("overlap")) {
    Reader o(r.raw("overlap"), r.at("overlap"));
    std::string mode = "full";
    o.get("mode", mode);
    if (mode == "full") {
      c.overlap = OverlapMode::kFull;
    } else if (mode == "partial") {
      c.overlap = OverlapMode::kPartial;
      o.get("min_overlap", c.min_overlap);
    } else {
      throw ConfigError(o.at("mode"), "expected full or partial");
    }
    o.finish();
  }
  if (r.has("noise")) {
    Reader n(r.raw("noise"), r.at("noise"));
    std::string mode = "mixclean";
    n.get("mode", mode);
    if (mode == "mixclean") {
      c.noise = NoiseMode::kMixClean;
    } else if (mode == "mixboth") {
      c.noise = NoiseMode::kMixBoth;
      if (n.has("snr_db")) {
        const json& s = n.raw("snr_db");
        if (!s.is_array() || s.size() != 2 || !s[0].is_number() || !s[1].is_number()) {
          throw ConfigError(n.at("snr_db"), "expected [min, max]");
        }
        c.snr_min_db = s[0].get<double>();
        c.snr_max_db = s[1].get<double>();
      }
    } else {
      throw ConfigError(n.at("mode"), "expected mixclean or mixboth");
    }
    n.finish();
  }
  r.finish();
  validate(c, path);
  return c;
}

json to_json(const ModelConfig& c) {
  return {{"speakers", c.speakers},
          {"encoder",
           {{"layers", c.encoder.layers},
            {"d_model", c.encoder.d_model},
            {"heads", c.encoder.heads},
            {"conv_kernel", c.encoder.conv_kernel},
            {"ff_dim", c.encoder.ff_dim},
            {"positional_encoding", c.encoder.positional_encoding},
            {"fusion", fusion_name(c.encoder.fusion)}}},
          {"sep",
           {{"kernel", c.sep.kernel},
            {"stride", c.sep.stride},
            {"filters", c.sep.filters},
            {"bottleneck", c.sep.bottleneck},
            {"blocks", c.sep.blocks},
            {"dilations", c.sep.dilations},
            {"tcn_kernel", c.sep.tcn_kernel},
            {"concat_encoder", c.sep.concat_encoder}}},
          {"asr",
           {{"d_model", c.asr.d_model},
            {"heads", c.asr.heads},
            {"ff_dim", c.asr.ff_dim},
            {"encoder_blocks", c.asr.encoder_blocks},
            {"decoder_blocks", c.asr.decoder_blocks},
            {"vocab_size", c.asr.vocab_size},
            {"ctc_weight", c.asr.ctc_weight},
            {"selection", selection_name(c.asr.selection)}}}};
}

namespace {

ModelConfig parse_model_unvalidated(const json& j, const std::string& path) {
  ModelConfig c;
  Reader r(j, path);
  r.get("speakers", c.speakers);
  if (r.has("encoder")) {
    Reader e(r.raw("encoder"), r.at("encoder"));
    e.get("layers", c.encoder.layers);
    e.get("d_model", c.encoder.d_model);
    e.get("heads", c.encoder.heads);
    e.get("conv_kernel", c.encoder.conv_kernel);
    e.get("ff_dim", c.encoder.ff_dim);
    e.get("positional_encoding", c.encoder.positional_encoding);
    if (e.has("fusion")) {
      std::string f;
      e.get("fusion", f);
      try {
        c.encoder.fusion = parse_fusion(f);
      } catch (const std::invalid_argument& err) {
        throw ConfigError(e.at("fusion"), err.what());
      }
    }
    e.finish();
  }
  if (r.has("sep")) {
    Reader s(r.raw("sep"), r.at("sep"));
    s.get("kernel", c.sep.kernel);
    s.get("stride", c.sep.stride);
    s.get("filters", c.sep.filters);
    s.get("bottleneck", c.sep.bottleneck);
    s.get("blocks", c.sep.blocks);
    if (s.has("dilations")) {
      const json& d = s.raw("dilations");
      if (!d.is_array() || d.empty()) throw ConfigError(s.at("dilations"), "expected a non-empty integer list");
      c.sep.dilations.clear();
      for (const auto& v : d) {
        if (!v.is_number_integer()) throw ConfigError(s.at("dilations"), "expected integers");
        c.sep.dilations.push_back(v.get<Index>());
      }
    }
    s.get("tcn_kernel", c.sep.tcn_kernel);
    s.get("concat_encoder", c.sep.concat_encoder);
    s.finish();
  }
  if (r.has("asr")) {
    Reader a(r.raw("asr"), r.at("asr"));
    a.get("d_model", c.asr.d_model);
    a.get("heads", c.asr.heads);
    a.get("ff_dim", c.asr.ff_dim);
    a.get("encoder_blocks", c.asr.encoder_blocks);
    a.get("decoder_blocks", c.asr.decoder_blocks);
    a.get("vocab_size", c.asr.vocab_size);
    a.get("ctc_weight", c.asr.ctc_weight);
    if (a.has("selection")) {
      std::string s;
      a.get("selection", s);
      if (s == "ctc") {
        c.asr.selection = AsrSelection::kCtc;
      } else if (s == "combined") {
        c.asr.selection = AsrSelection::kCombined;
      } else {
        throw ConfigError(a.at("selection"), "expected ctc or combined");
      }
    }
    a.finish();
  }
  r.finish();
  return c;
}

}  // namespace

ModelConfig parse_model_config(const json& j, const std::string& path) {
  ModelConfig c = parse_model_unvalidated(j, path);
  validate(c, path);
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"warmup", c.warmup},
          {"weight_decay", c.weight_decay},
          {"seed", c.seed},
          {"weights", {{"diar", c.weights.diar}, {"sep", c.weights.sep}, {"asr", c.weights.asr}}},
          {"init", c.init_asr.empty() ? std::string("flat") : c.init_asr},
          {"checkpoint_every", c.checkpoint_every},
          {"divergence",
           {{"factor", c.divergence_factor},
            {"window", c.divergence_window},
            {"min_history", c.divergence_min_history}}},
          {"threads", c.threads}};
}

namespace {

TrainConfig parse_train_unvalidated(const json& j, const std::string& path, std::optional<Fusion>* fusion) {
  TrainConfig c;
  Reader r(j, path);
  r.get("steps", c.steps);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  r.get("warmup", c.warmup);
  r.get("weight_decay", c.weight_decay);
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.get("threads", c.threads);
  if (r.has("weights")) {
    Reader w(r.raw("weights"), r.at("weights"));
    w.get("diar", c.weights.diar);
    w.get("sep", c.weights.sep);
    w.get("asr", c.weights.asr);
    w.finish();
  }
  if (r.has("init")) {
    std::string init;
    r.get("init", init);
    c.init_asr = init == "flat" ? "" : init;
  }
  if (r.has("divergence")) {
    Reader d(r.raw("divergence"), r.at("divergence"));
    d.get("factor", c.divergence_factor);
    d.get("window", c.divergence_window);
    d.get("min_history", c.divergence_min_history);
    d.finish();
  }
  if (r.has("fusion")) {
    std::string f;
    r.get("fusion", f);
    if (fusion == nullptr) throw ConfigError(r.at("fusion"), "only allowed in a run configuration");
    try {
      *fusion = parse_fusion(f);
    } catch (const std::invalid_argument& err) {
      throw ConfigError(r.at("fusion"), err.what());
    }
  }
  r.finish();
  return c;
}

}  // namespace

TrainConfig parse_train_config(const json& j, const std::string& path) {
  TrainConfig c = parse_train_unvalidated(j, path, nullptr);
  validate(c, path);
  return c;
}

void validate(const EvalConfig& c, const std::string& path) {
  if (c.collars.empty()) throw ConfigError(path + ".collars", "need at least one collar");
  for (double v : c.collars)
    if (!(v >= 0)) throw ConfigError(path + ".collars", "collars must be >= 0");
  if (c.median_frames < 1 || c.median_frames % 2 == 0) {
    throw ConfigError(path + ".median_frames", "must be a positive odd integer");
  }
  if (c.tasks.empty()) throw ConfigError(path + ".tasks", "need at least one task");
}

json to_json(const EvalConfig& c) {
  json tasks = json::array();
  for (Task t : c.tasks) tasks.push_back(task_name(t));
  return {{"collars", c.collars}, {"median_frames", c.median_frames}, {"tasks", tasks}};
}

EvalConfig parse_eval_config(const json& j, const std::string& path) {
  EvalConfig c;
  Reader r(j, path);
  if (r.has("collars")) {
    const json& v = r.raw("collars");
    if (!v.is_array()) throw ConfigError(r.at("collars"), "expected a list of seconds");
    c.collars.clear();
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(r.at("collars"), "expected numbers");
      c.collars.push_back(x.get<double>());
    }
  }
  r.get("median_frames", c.median_frames);
  if (r.has("tasks")) {
    const json& v = r.raw("tasks");
    if (!v.is_array()) throw ConfigError(r.at("tasks"), "expected a list of task names");
    c.tasks.clear();
    for (const auto& x : v) {
      try {
        const Task t = parse_task(x.is_string() ? x.get<std::string>() : x.dump());
        if (std::find(c.tasks.begin(), c.tasks.end(), t) == c.tasks.end()) c.tasks.push_back(t);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(r.at("tasks"), e.what());
      }
    }
  }
  r.finish();
  validate(c, path);
  return c;
}

json to_json(const RunConfig& c) {
  return {{"data", to_json(c.data)}, {"model", to_json(c.model)}, {"train", to_json(c.train)},
          {"eval", to_json(c.eval)}};
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("$", "expected an object");
  Reader r(j, "$");
  RunConfig c;
  const json empty = json::object();
  const json& data = r.has("data") ? r.raw("data") : empty;
  const json& model = r.has("model") ? r.raw("model") : empty;
  const json& train = r.has("train") ? r.raw("train") : empty;
  const json& eval = r.has("eval") ? r.raw("eval") : empty;
  for (const auto& [key, _] : j.items()) {
    if (key != "data" && key != "model" && key != "train" && key != "eval") throw ConfigError(key, "unknown key");
  }

  c.data = parse_dataset_config(data, "data");
  c.model = parse_model_unvalidated(model, "model");
  if (!model.contains("speakers")) {
    c.model.speakers = c.data.speakers;
  } else if (c.model.speakers != c.data.speakers) {
    throw ConfigError("model.speakers", "must equal data.speakers (" + std::to_string(c.data.speakers) + ")");
  }
  const bool has_vocab = model.contains("asr") && model.at("asr").contains("vocab_size");
  if (!has_vocab) {
    c.model.asr.vocab_size = c.data.vocab_size;
  } else if (c.model.asr.vocab_size < c.data.vocab_size) {
    throw ConfigError("model.asr.vocab_size", "smaller than data.vocab_size");
  }
  std::optional<Fusion> fusion;
  c.train = parse_train_unvalidated(train, "train", &fusion);
  if (fusion) {
    const bool explicit_model = model.contains("encoder") && model.at("encoder").contains("fusion");
    if (explicit_model && c.model.encoder.fusion != *fusion) {
      throw ConfigError("train.fusion", "conflicts with model.encoder.fusion");
    }
    c.model.encoder.fusion = *fusion;
  }
  validate(c.model, "model");
  validate(c.train, "train");
  c.eval = parse_eval_config(eval, "eval");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open configuration file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

}  // namespace ume
