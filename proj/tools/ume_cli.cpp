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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ume/config.h"
#include "ume/dataset.h"
#include "ume/evaluate.h"
#include "ume/trainer.h"
#include "ume/wav.h"

namespace fs = std::filesystem;
using namespace ume;
using nlohmann::json;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
  }
  fs::rename(tmp, path);
}

std::string collar_tag(double collar) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", collar);
  return buf;
}

struct GenArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> items;
};

int cmd_gen(const GenArgs& a) {
  RunConfig run = load_run_config(a.config);
  if (a.seed) run.data.seed = *a.seed;
  if (a.items) run.data.num_items = *a.items;
  validate(run.data, "data");
  const auto items = generate_dataset(run.data);
  write_dataset(items, a.out);
  double seconds = 0;
  for (const auto& it : items) seconds += static_cast<double>(it.length()) / it.sample_rate;
  std::printf("generated %zu items, %.1f s of audio, in %s\n", items.size(), seconds, a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string config, data, out, init_asr, resume;
  bool pretrain_asr = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig run = load_run_config(a.config);
  if (!a.init_asr.empty()) run.train.init_asr = a.init_asr;
  if (a.pretrain_asr && !run.train.init_asr.empty()) {
    throw ConfigError("train.init", "--pretrain-asr starts from a flat model");
  }
  if (!run.train.init_asr.empty() && !fs::exists(run.train.init_asr)) {
    throw ConfigError("train.init", "checkpoint " + run.train.init_asr + " does not exist");
  }
  if (!a.resume.empty() && !fs::exists(a.resume)) throw ConfigError("--resume", a.resume + " does not exist");
  const auto data = read_dataset(a.data);
  for (const auto& item : data) {
    for (const auto& w : item.transcripts)
      for (int tok : w)
        if (tok > run.model.asr.vocab_size) {
          throw ConfigError("model.asr.vocab_size", "item " + item.id + " uses token " + std::to_string(tok));
        }
  }
  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "config.json", to_json(run).dump(2) + "\n");

  Model<float> model(run.model, run.train.seed);
  std::vector<StepLog> logs;
  if (a.pretrain_asr) {
    logs = pretrain_asr(model, data, run.train, a.out);
  } else {
    Trainer trainer(model, data, run.train, a.out);
    if (!a.resume.empty()) trainer.resume(a.resume);
    logs = trainer.run();
  }
  if (!logs.empty()) {
    std::printf("trained to step %ld, L_all %.6g, checkpoint %s\n", logs.back().step, logs.back().losses.all,
                (fs::path(a.out) / kFinalCheckpointName).c_str());
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, out, config;
  std::vector<std::string> tasks;
  std::vector<double> collars;
  std::optional<int> median;
  bool oracle = false;
};

int cmd_eval(const EvalArgs& a) {
  EvalConfig ec;
  if (!a.config.empty()) ec = load_run_config(a.config).eval;
  if (!a.tasks.empty()) {
    ec.tasks.clear();
    for (const auto& t : a.tasks) {
      try {
        ec.tasks.push_back(parse_task(t));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("--tasks", e.what());
      }
    }
  }
  if (!a.collars.empty()) ec.collars = a.collars;
  if (a.median) ec.median_frames = *a.median;
  validate(ec, "eval");
  if (!a.oracle && a.ckpt.empty()) throw ConfigError("--ckpt", "required unless --oracle is given");

  const auto data = read_dataset(a.data);
  std::vector<Inference> outputs;
  std::string source = "oracle";
  if (a.oracle) {
    for (const auto& item : data) outputs.push_back(oracle_inference(item));
  } else {
    LoadedModel loaded = load_model(a.ckpt);
    if (loaded.model->config().speakers != data.front().speakers()) {
      throw std::runtime_error("checkpoint expects " + std::to_string(loaded.model->config().speakers) +
                               " speakers, data has " + std::to_string(data.front().speakers()));
    }
    outputs = run_inference(*loaded.model, data, worker_threads(0));
    source = a.ckpt;
  }

  fs::create_directories(a.out);
  json report = {{"source", source}, {"data", a.data}, {"median_frames", ec.median_frames}, {"by_collar", json::array()}};
  json tasks = json::array();
  for (Task t : ec.tasks) tasks.push_back(task_name(t));
  report["tasks"] = tasks;
  for (double collar : ec.collars) {
    EvalOptions opt;
    opt.collar = collar;
    opt.median_frames = ec.median_frames;
    opt.tasks = ec.tasks;
    const auto items = score_all(data, outputs, opt);
    const auto agg = aggregate(items);
    json r = report_json(items, agg);
    r["collar"] = collar;
    report["by_collar"].push_back(r);
    write_text(fs::path(a.out) / ("report_collar" + collar_tag(collar) + ".csv"), report_csv(items));
    std::printf("collar %.2f s:", collar);
    if (agg.der) std::printf(" DER %.4f", *agg.der);
    if (agg.wer) std::printf(" WER %.4f", *agg.wer);
    if (agg.si_snr) std::printf(" SI-SNR %.2f dB", *agg.si_snr);
    if (agg.si_snri) std::printf(" SI-SNRi %.2f dB", *agg.si_snri);
    if (agg.sdr) std::printf(" SDR %.2f dB", *agg.sdr);
    std::printf(" (%d items)\n", agg.items);
  }
  write_text(fs::path(a.out) / "report.json", report.dump(2) + "\n");
  return 0;
}

struct InferArgs {
  std::string ckpt, wav, out;
};

int cmd_infer(const InferArgs& a) {
  LoadedModel loaded = load_model(a.ckpt);
  const WavData wav = read_wav(a.wav);
  if (loaded.sample_rate != 0 && wav.sample_rate != loaded.sample_rate) {
    throw std::runtime_error(a.wav + " has sample rate " + std::to_string(wav.sample_rate) + " Hz, expected " +
                             std::to_string(loaded.sample_rate) + " Hz");
  }
  if (wav.samples.size() < kMinInputSamples) {
    throw std::runtime_error(a.wav + " is shorter than " + std::to_string(kMinInputSamples) + " samples");
  }
  const Inference inf = loaded.model->infer(wav.samples);
  const std::string stem = fs::path(a.wav).stem().string();
  const fs::path out(a.out);
  fs::create_directories(out);
  for (std::size_t c = 0; c < inf.estimates.size(); ++c) {
    write_wav(out / (stem + "_est" + std::to_string(c + 1) + ".wav"), inf.estimates[c], wav.sample_rate);
  }
  const double shift = encoder_frame_shift(wav.samples.size(), wav.sample_rate);
  std::ostringstream rttm;
  write_rttm(rttm, stem, diarization_decisions(inf.probs, 0.5, 11), shift);
  write_text(out / (stem + ".rttm"), rttm.str());
  json hyp = {{"id", stem}, {"sample_rate", wav.sample_rate}, {"streams", json::array()}};
  for (std::size_t c = 0; c < inf.hypotheses.size(); ++c) {
    hyp["streams"].push_back({{"tokens", inf.hypotheses[c]}, {"scores", inf.token_scores[c]}});
  }
  write_text(out / (stem + "_hyp.json"), hyp.dump(2) + "\n");
  std::printf("wrote %zu estimates, %s.rttm and %s_hyp.json to %s\n", inf.estimates.size(), stem.c_str(),
              stem.c_str(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified multi-speaker encoder: simulate, train, evaluate and run inference"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic mixture dataset");
  g->add_option("--config", gen.config, "Run configuration JSON")->required();
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Override data.seed");
  g->add_option("--items", gen.items, "Override data.num_items");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", train.config, "Run configuration JSON")->required();
  t->add_option("--data", train.data, "Dataset directory or manifest")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--init-asr", train.init_asr, "Initialize encoder and ASR head from this checkpoint");
  t->add_flag("--pretrain-asr", train.pretrain_asr, "Train the encoder and ASR head only");
  t->add_option("--resume", train.resume, "Continue from a checkpoint of this run");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint");
  e->add_option("--data", ev.data, "Dataset directory or manifest")->required();
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--config", ev.config, "Run configuration JSON supplying eval defaults");
  e->add_option("--tasks", ev.tasks, "Tasks to score (diar, sep, asr)")->delimiter(',');
  e->add_option("--collar", ev.collars, "DER collar in seconds; repeatable")->delimiter(',');
  e->add_option("--median", ev.median, "Median filter width in frames");
  e->add_flag("--oracle", ev.oracle, "Score ground truth as the system output");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Run all heads on one WAV file");
  i->add_option("--ckpt", inf.ckpt, "Checkpoint")->required();
  i->add_option("--wav", inf.wav, "Input mixture")->required();
  i->add_option("--out", inf.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(ev);
    if (*i) return cmd_infer(inf);
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitConfig;
  } catch (const DivergenceError& err) {
    std::fprintf(stderr, "%s\n", err.what());
    return kExitDivergence;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitOther;
  }
  return kExitOther;
}
