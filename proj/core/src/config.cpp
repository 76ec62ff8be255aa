// core/src/config.cpp

#include "ctcbridge/config.hpp"

#include <fstream>
#include <set>

namespace ctcbridge::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw ConfigError("expected an object at '" + path + "'");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw ConfigError("unknown config key '" + path + key + "'");
  }
}

}  // namespace

void TrainSchedule::validate() const {
  if (mode != "supervised" && mode != "zeroshot" && mode != "cascade")
    throw ConfigError("schedule.mode must be supervised, zeroshot, or "
                      "cascade, got '" + mode + "'");
  if (batch_size < 1) throw ConfigError("schedule.batch_size must be >= 1");
  if (lr <= 0.0) throw ConfigError("schedule.lr must be positive");
  if (pretrain_steps < 0 || stage1_steps < 1 || stage2_steps < 1)
    throw ConfigError("schedule step budgets must be positive");
  if (val_interval < 1) throw ConfigError("schedule.val_interval must be >= 1");
  if (patience < 1) throw ConfigError("schedule.patience must be >= 1");
  if (avg_best_k < 1) throw ConfigError("schedule.avg_best_k must be >= 1");
  if (tts_batch_ratio < 1)
    throw ConfigError("schedule.tts_batch_ratio must be >= 1");
  if (warmup_steps < 0) throw ConfigError("schedule.warmup_steps must be >= 0");
}

void ExperimentConfig::validate() const {
  task.validate();
  try {
    model.validate();
    adaptor.validate();
    align.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  schedule.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["corpus_dir"] = corpus_dir;
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  j["seeds"] = seeds;
  j["task"] = task.to_json();
  ordered_json m;
  m["dim"] = model.dim;
  m["heads"] = model.heads;
  m["ffn_dim"] = model.ffn_dim;
  m["s2tt_enc_layers"] = model.s2tt_enc_layers;
  m["s2tt_dec_layers"] = model.s2tt_dec_layers;
  m["tts_enc_layers"] = model.tts_enc_layers;
  m["tts_dec_layers"] = model.tts_dec_layers;
  m["tts_dim"] = model.tts_dim;
  m["dur_hidden"] = model.dur_hidden;
  m["dropout"] = model.dropout;
  m["label_smoothing"] = model.label_smoothing;
  m["max_decode_len"] = model.max_decode_len;
  j["model"] = m;
  ordered_json a;
  a["lambda"] = adaptor.upsample;
  a["layers"] = adaptor.layers;
  a["model_dim"] = adaptor.model_dim;
  a["heads"] = adaptor.heads;
  a["ffn_dim"] = adaptor.ffn_dim;
  a["confidence_on_logprob"] = adaptor.confidence_on_logprob;
  j["adaptor"] = a;
  ordered_json al;
  al["similarity"] = align::similarity_name(align.similarity);
  al["tau"] = align.tau;
  al["use_mse"] = align.use_mse;
  al["use_ctr"] = align.use_ctr;
  al["detach_teacher"] = align.detach_teacher;
  j["align"] = al;
  ordered_json s;
  s["mode"] = schedule.mode;
  s["pretrain_s2tt"] = schedule.pretrain_s2tt;
  s["pretrain_tts"] = schedule.pretrain_tts;
  s["two_stage"] = schedule.two_stage;
  s["pretrain_steps"] = schedule.pretrain_steps;
  s["stage1_steps"] = schedule.stage1_steps;
  s["stage2_steps"] = schedule.stage2_steps;
  s["batch_size"] = schedule.batch_size;
  s["lr"] = schedule.lr;
  s["warmup_steps"] = schedule.warmup_steps;
  s["val_interval"] = schedule.val_interval;
  s["patience"] = schedule.patience;
  s["avg_best_k"] = schedule.avg_best_k;
  s["tts_batch_ratio"] = schedule.tts_batch_ratio;
  s["gamma"] = schedule.gamma;
  s["clip_norm"] = schedule.clip_norm;
  j["schedule"] = s;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j, "", {"corpus_dir", "out_dir", "seed", "seeds", "task",
                     "model", "adaptor", "align", "schedule"});
  ExperimentConfig cfg;
  cfg.corpus_dir = j.value("corpus_dir", cfg.corpus_dir);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("seeds"))
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

  if (j.contains("task")) {
    check_keys(j.at("task"), "task.",
               {"base_vocab_size", "source_vocab_size", "lexicon_seed",
                "frame_dim", "frames_per_source_token", "signal_dim",
                "noise_sigma", "source_noise_sigma", "min_source_len",
                "max_source_len", "sizes"});
    if (j.at("task").contains("sizes"))
      check_keys(j.at("task").at("sizes"), "task.sizes.",
                 {"s2tt_train", "s2tt_dev", "tts_train", "tts_dev",
                  "s2st_train", "s2st_dev", "test"});
    cfg.task = synth::SynthTaskSpec::from_json(j.at("task"));
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, "model.",
               {"dim", "heads", "ffn_dim", "s2tt_enc_layers",
                "s2tt_dec_layers", "tts_enc_layers", "tts_dec_layers",
                "tts_dim", "dur_hidden", "dropout", "label_smoothing",
                "max_decode_len"});
    cfg.model.dim = m.value("dim", cfg.model.dim);
    cfg.model.heads = m.value("heads", cfg.model.heads);
    cfg.model.ffn_dim = m.value("ffn_dim", cfg.model.ffn_dim);
    cfg.model.s2tt_enc_layers =
        m.value("s2tt_enc_layers", cfg.model.s2tt_enc_layers);
    cfg.model.s2tt_dec_layers =
        m.value("s2tt_dec_layers", cfg.model.s2tt_dec_layers);
    cfg.model.tts_enc_layers =
        m.value("tts_enc_layers", cfg.model.tts_enc_layers);
    cfg.model.tts_dec_layers =
        m.value("tts_dec_layers", cfg.model.tts_dec_layers);
    cfg.model.tts_dim = m.value("tts_dim", cfg.model.tts_dim);
    cfg.model.dur_hidden = m.value("dur_hidden", cfg.model.dur_hidden);
    cfg.model.dropout = m.value("dropout", cfg.model.dropout);
    cfg.model.label_smoothing =
        m.value("label_smoothing", cfg.model.label_smoothing);
    cfg.model.max_decode_len =
        m.value("max_decode_len", cfg.model.max_decode_len);
  }

  cfg.adaptor.model_dim = cfg.model.dim;
  cfg.adaptor.heads = cfg.model.heads;
  cfg.adaptor.ffn_dim = cfg.model.ffn_dim;
  if (j.contains("adaptor")) {
    const auto& a = j.at("adaptor");
    check_keys(a, "adaptor.",
               {"lambda", "layers", "model_dim", "heads", "ffn_dim",
                "confidence_on_logprob"});
    cfg.adaptor.upsample = a.value("lambda", cfg.adaptor.upsample);
    cfg.adaptor.layers = a.value("layers", cfg.adaptor.layers);
    cfg.adaptor.model_dim = a.value("model_dim", cfg.adaptor.model_dim);
    cfg.adaptor.heads = a.value("heads", cfg.adaptor.heads);
    cfg.adaptor.ffn_dim = a.value("ffn_dim", cfg.adaptor.ffn_dim);
    cfg.adaptor.confidence_on_logprob =
        a.value("confidence_on_logprob", cfg.adaptor.confidence_on_logprob);
  }

  if (j.contains("align")) {
    const auto& al = j.at("align");
    check_keys(al, "align.",
               {"similarity", "tau", "use_mse", "use_ctr", "detach_teacher"});
    if (al.contains("similarity"))
      cfg.align.similarity = align::similarity_from_name(
          al.at("similarity").get<std::string>());
    cfg.align.tau = al.value("tau", cfg.align.tau);
    cfg.align.use_mse = al.value("use_mse", cfg.align.use_mse);
    cfg.align.use_ctr = al.value("use_ctr", cfg.align.use_ctr);
    cfg.align.detach_teacher =
        al.value("detach_teacher", cfg.align.detach_teacher);
  }

  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s, "schedule.",
               {"mode", "pretrain_s2tt", "pretrain_tts", "two_stage",
                "pretrain_steps", "stage1_steps", "stage2_steps",
                "batch_size", "lr", "warmup_steps", "val_interval",
                "patience", "avg_best_k", "tts_batch_ratio", "gamma",
                "clip_norm"});
    auto& sc = cfg.schedule;
    sc.mode = s.value("mode", sc.mode);
    sc.pretrain_s2tt = s.value("pretrain_s2tt", sc.pretrain_s2tt);
    sc.pretrain_tts = s.value("pretrain_tts", sc.pretrain_tts);
    sc.two_stage = s.value("two_stage", sc.two_stage);
    sc.pretrain_steps = s.value("pretrain_steps", sc.pretrain_steps);
    sc.stage1_steps = s.value("stage1_steps", sc.stage1_steps);
    sc.stage2_steps = s.value("stage2_steps", sc.stage2_steps);
    sc.batch_size = s.value("batch_size", sc.batch_size);
    sc.lr = s.value("lr", sc.lr);
    sc.warmup_steps = s.value("warmup_steps", sc.warmup_steps);
    sc.val_interval = s.value("val_interval", sc.val_interval);
    sc.patience = s.value("patience", sc.patience);
    sc.avg_best_k = s.value("avg_best_k", sc.avg_best_k);
    sc.tts_batch_ratio = s.value("tts_batch_ratio", sc.tts_batch_ratio);
    sc.gamma = s.value("gamma", sc.gamma);
    sc.clip_norm = s.value("clip_norm", sc.clip_norm);
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_json(j);
}

}  // namespace ctcbridge::config
