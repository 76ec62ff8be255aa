// ctcbridge/config.hpp
//
// The experiment config: one JSON document covering task spec, model
// dims, adaptor, alignment, and schedule. Schema-validated before any
// work; unknown keys are rejected.

#ifndef CTCBRIDGE_CONFIG_HPP_
#define CTCBRIDGE_CONFIG_HPP_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctcbridge/adaptor.hpp"
#include "ctcbridge/align.hpp"
#include "ctcbridge/pipeline.hpp"
#include "ctcbridge/synth.hpp"

namespace ctcbridge::config {

struct TrainSchedule {
  std::string mode = "zeroshot";  // supervised | zeroshot | cascade
  bool pretrain_s2tt = false;
  bool pretrain_tts = false;
  bool two_stage = true;
  int pretrain_steps = 400;
  int stage1_steps = 500;
  int stage2_steps = 800;
  int batch_size = 8;
  double lr = 1e-3;
  int warmup_steps = 100;
  int val_interval = 50;
  int patience = 10;
  int avg_best_k = 5;
  int tts_batch_ratio = 1;  // synthesis batches per translation batch
  double gamma = 1.0;       // weight on the second-pass term
  double clip_norm = 1.0;   // global gradient-norm clip; <= 0 disables

  void validate() const;
};

struct ExperimentConfig {
  std::string corpus_dir = "corpus";
  std::string out_dir = "runs/default";
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds = {1, 2, 3};  // for sweeps/ablations
  synth::SynthTaskSpec task;
  pipeline::ModelConfig model;
  adaptor::AdaptorConfig adaptor;
  align::AlignConfig align;
  TrainSchedule schedule;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
};

}  // namespace ctcbridge::config

#endif  // CTCBRIDGE_CONFIG_HPP_
