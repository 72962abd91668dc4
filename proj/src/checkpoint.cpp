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

#include "ume/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

namespace ume {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian host");

template <typename S>
void append_blob(std::string& blob, const Array<S>& values) {
  const std::size_t at = blob.size();
  blob.resize(at + sizeof(float) * static_cast<std::size_t>(values.size()));
  for (Index i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values(i));
    std::memcpy(blob.data() + at + sizeof(float) * static_cast<std::size_t>(i), &f, sizeof(float));
  }
}

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  if (prefixes.empty()) return true;
  for (const auto& p : prefixes)
    if (name.rfind(p, 0) == 0) return true;
  return false;
}

}  // namespace

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<S>& store,
                     const nlohmann::json& meta, bool with_optimizer) {
  nlohmann::json header = meta.is_object() ? meta : nlohmann::json::object();
  header["format_version"] = kCheckpointFormatVersion;
  nlohmann::json entries = nlohmann::json::array();
  std::string blob;
  auto add = [&](const Parameter<S>& p, const char* role, const Array<S>& values) {
    entries.push_back({{"name", p.name}, {"role", role}, {"shape", p.shape}, {"offset", blob.size()}});
    if (std::string(role) == "adam_m") entries.back()["step"] = p.step;
    append_blob(blob, values);
  };
  for (const Parameter<S>* p : store.all()) add(*p, "value", p->value);
  if (with_optimizer) {
    for (const Parameter<S>* p : store.all()) {
      add(*p, "adam_m", p->adam_m);
      add(*p, "adam_v", p->adam_v);
    }
  }
  header["params"] = std::move(entries);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + tmp.string() + "' for writing");
    out << header.dump() << '\n';
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint header in '" + path.string() + "': " + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format_version in '" + path.string() + "'");
  }
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  for (const auto& e : header.at("params")) {
    CheckpointTensor t;
    t.shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto n = static_cast<std::size_t>(shape_size(t.shape));
    if (offset + n * sizeof(float) > blob.size()) {
      throw CheckpointError("checkpoint '" + path.string() + "' is truncated");
    }
    t.data.resize(n);
    std::memcpy(t.data.data(), blob.data() + offset, n * sizeof(float));
    const auto name = e.at("name").get<std::string>();
    const auto role = e.value("role", std::string("value"));
    if (role == "value") {
      ckpt.values[name] = std::move(t);
    } else if (role == "adam_m") {
      ckpt.adam_steps[name] = e.value("step", 0L);
      ckpt.adam_m[name] = std::move(t);
    } else if (role == "adam_v") {
      ckpt.adam_v[name] = std::move(t);
    }
  }
  header.erase("params");
  header.erase("format_version");
  ckpt.meta = std::move(header);
  return ckpt;
}

template <typename S>
void apply_checkpoint(ParameterStore<S>& store, const Checkpoint& ckpt,
                      const std::vector<std::string>& prefixes, bool with_optimizer) {
  std::vector<std::string> bad;
  for (const Parameter<S>* p : store.all()) {
    if (!has_prefix(p->name, prefixes)) continue;
    auto it = ckpt.values.find(p->name);
    if (it == ckpt.values.end() || it->second.shape != p->shape) bad.push_back(p->name);
  }
  if (prefixes.empty()) {
    for (const auto& [name, t] : ckpt.values)
      if (!store.find(name)) bad.push_back(name);
  }
  if (!bad.empty()) {
    std::string msg = "checkpoint does not match model; mismatched parameters:";
    for (const auto& n : bad) msg += " " + n;
    throw CheckpointError(msg, bad);
  }
  auto copy = [](const CheckpointTensor& t, Array<S>& dst) {
    dst.resize(static_cast<Index>(t.data.size()));
    for (std::size_t i = 0; i < t.data.size(); ++i) dst(static_cast<Index>(i)) = static_cast<S>(t.data[i]);
  };
  for (Parameter<S>* p : store.all()) {
    if (!has_prefix(p->name, prefixes)) continue;
    copy(ckpt.values.at(p->name), p->value);
    auto m = ckpt.adam_m.find(p->name);
    auto v = ckpt.adam_v.find(p->name);
    if (with_optimizer && m != ckpt.adam_m.end() && v != ckpt.adam_v.end()) {
      copy(m->second, p->adam_m);
      copy(v->second, p->adam_v);
      p->step = ckpt.adam_steps.at(p->name);
    } else {
      p->adam_m = Array<S>::Zero(p->value.size());
      p->adam_v = Array<S>::Zero(p->value.size());
      p->step = 0;
    }
    p->zero_grad();
  }
}

template void save_checkpoint(const std::filesystem::path&, const ParameterStore<float>&,
                              const nlohmann::json&, bool);
template void save_checkpoint(const std::filesystem::path&, const ParameterStore<double>&,
                              const nlohmann::json&, bool);
template void apply_checkpoint(ParameterStore<float>&, const Checkpoint&, const std::vector<std::string>&,
                               bool);
template void apply_checkpoint(ParameterStore<double>&, const Checkpoint&, const std::vector<std::string>&,
                               bool);

}  // namespace ume
