// core/src/trainer.cpp

#include "ctcbridge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace ctcbridge::trainer {

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using pipeline::LossParts;
using pipeline::SampleLoss;

std::vector<StagePlan> plan_stages(const config::TrainSchedule& s) {
  std::vector<StagePlan> plan;
  if (s.mode == "cascade") {
    // The cascade baseline is the pretrained halves glued by exact
    // re-tokenization: the same models that would initialize zero-shot
    // finetuning, with no joint training on top.
    plan.push_back({"cascade_s2tt", StagePlan::Kind::kS2TTOnly,
                    s.pretrain_steps});
    plan.push_back({"cascade_tts", StagePlan::Kind::kTTSOnly,
                    s.pretrain_steps});
    return plan;
  }
  if (s.pretrain_s2tt)
    plan.push_back({"pretrain_s2tt", StagePlan::Kind::kS2TTOnly,
                    s.pretrain_steps});
  if (s.pretrain_tts)
    plan.push_back({"pretrain_tts", StagePlan::Kind::kTTSOnly,
                    s.pretrain_steps});
  if (s.mode == "supervised") {
    plan.push_back({"supervised", StagePlan::Kind::kSupervised,
                    s.stage2_steps});
  } else {  // zeroshot
    if (s.two_stage) {
      plan.push_back({"stage1", StagePlan::Kind::kZS1, s.stage1_steps});
      plan.push_back({"stage2", StagePlan::Kind::kZS2, s.stage2_steps});
    } else {
      plan.push_back({"stage2", StagePlan::Kind::kZS2, s.stage2_steps});
    }
  }
  return plan;
}

std::unique_ptr<pipeline::ComposedModel> build_model(
    const config::ExperimentConfig& cfg, const synth::CorpusReader& reader,
    std::uint64_t seed) {
  return std::make_unique<pipeline::ComposedModel>(
      cfg.model, cfg.adaptor, reader.spec().frame_dim,
      reader.subwords().size(), reader.base().size(),
      reader.spec().signal_dim, seed);
}

Trainer::Trainer(const config::ExperimentConfig& cfg, std::uint64_t seed,
                 const std::string& out_dir,
                 std::vector<StagePlan> plan_override,
                 const std::string& init_checkpoint)
    : cfg_(cfg), seed_(seed), out_dir_(out_dir) {
  cfg_.validate();
  fs::create_directories(out_dir_);
  reader_ = std::make_unique<synth::CorpusReader>(cfg_.corpus_dir);
  if (cfg_.schedule.mode == "zeroshot" || cfg_.schedule.mode == "cascade")
    reader_->forbid_prefix("s2st");
  model_ = build_model(cfg_, *reader_, seed_);
  stages_ = plan_override.empty() ? plan_stages(cfg_.schedule)
                                  : std::move(plan_override);

  data_["s2tt_train"] = reader_->load_split("s2tt_train");
  data_["s2tt_dev"] = reader_->load_split("s2tt_dev");
  data_["tts_train"] = reader_->load_split("tts_train");
  data_["tts_dev"] = reader_->load_split("tts_dev");
  if (cfg_.schedule.mode == "supervised") {
    data_["s2st_train"] = reader_->load_split("s2st_train");
    data_["s2st_dev"] = reader_->load_split("s2st_dev");
  }

  if (!load_state()) {
    state_ = RunState{};
    std::ofstream(metrics_path(), std::ios::trunc);
    if (!init_checkpoint.empty()) model_->store().load(init_checkpoint);
  }
}

void Trainer::train(int step_budget) {
  steps_left_ = step_budget;
  while (!state_.done && state_.stage_index < stages_.size()) {
    if (!run_stage(stages_[state_.stage_index])) return;  // budget exhausted
  }
  if (!state_.done) {
    model_->store().save(final_checkpoint_path());
    state_.done = true;
    save_state();
  }
  assert_purity();
}

void Trainer::assert_purity() const {
  if (cfg_.schedule.mode == "supervised") return;
  for (const auto& name : reader_->audit_log()) {
    if (name.rfind("s2st", 0) == 0 || name == "test")
      throw InvariantBreach("training in mode '" + cfg_.schedule.mode +
                            "' read split '" + name + "'");
  }
}

std::vector<std::size_t> Trainer::next_batch(
    const std::vector<synth::Triple>& data, StreamState& stream,
    std::uint64_t salt) {
  std::size_t n = data.size();
  CTCB_CHECK(n > 0, "empty training split");
  auto batch_size = static_cast<std::size_t>(cfg_.schedule.batch_size);
  // Epoch order is a pure function of (seed, stage, salt, epoch), so a
  // resumed run replays the identical sequence.
  RngState order = RngState(seed_)
                       .fork(0x5747 + state_.stage_index)
                       .fork(salt)
                       .fork(stream.epoch);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  order.shuffle(idx);
  std::vector<std::size_t> batch;
  while (batch.size() < batch_size) {
    if (stream.pos >= n) {
      if (!batch.empty()) break;  // short tail batch ends the epoch
      stream.pos = 0;
      ++stream.epoch;
      order = RngState(seed_)
                  .fork(0x5747 + state_.stage_index)
                  .fork(salt)
                  .fork(stream.epoch);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      order.shuffle(idx);
    }
    batch.push_back(idx[stream.pos++]);
  }
  if (stream.pos >= n) {
    stream.pos = 0;
    ++stream.epoch;
  }
  return batch;
}

SampleLoss Trainer::sample_loss(StagePlan::Kind kind, bool tts_batch,
                                const synth::Triple& sample, RngState& rng,
                                bool train) {
  switch (kind) {
    case StagePlan::Kind::kS2TTOnly: {
      auto fwd = pipeline::s2tt_loss(model_->s2tt(), sample,
                                     cfg_.model.label_smoothing, rng, train);
      SampleLoss out;
      out.loss = fwd.loss;
      out.parts.s2tt = fwd.loss.item();
      out.parts.total = out.parts.s2tt;
      return out;
    }
    case StagePlan::Kind::kTTSOnly:
      return pipeline::zs_stage2_tts_loss(*model_, sample, rng, train);
    case StagePlan::Kind::kSupervised:
      return pipeline::supervised_loss(*model_, sample, cfg_.schedule.gamma,
                                       rng, train);
    case StagePlan::Kind::kZS1:
      return pipeline::zs_stage1_loss(*model_, sample, rng, train);
    case StagePlan::Kind::kZS2:
      return tts_batch
                 ? pipeline::zs_stage2_tts_loss(*model_, sample, rng, train)
                 : pipeline::zs_stage2_s2tt_loss(*model_, sample,
                                                 cfg_.align, rng, train);
  }
  throw ContractViolation("unhandled stage kind");
}

namespace {

const char* train_split_for(StagePlan::Kind kind, bool tts_batch) {
  switch (kind) {
    case StagePlan::Kind::kS2TTOnly:
      return "s2tt_train";
    case StagePlan::Kind::kTTSOnly:
      return "tts_train";
    case StagePlan::Kind::kSupervised:
      return "s2st_train";
    case StagePlan::Kind::kZS1:
      return "s2tt_train";
    case StagePlan::Kind::kZS2:
      return tts_batch ? "tts_train" : "s2tt_train";
  }
  return "s2tt_train";
}

bool stage_trains_param(StagePlan::Kind kind, const std::string& name) {
  switch (kind) {
    case StagePlan::Kind::kS2TTOnly:
      return name.rfind("f.", 0) == 0;
    case StagePlan::Kind::kTTSOnly:
      return name.rfind("g.", 0) == 0;
    case StagePlan::Kind::kZS1:
      return name.rfind("f.", 0) == 0 || name.rfind("adaptor.", 0) == 0;
    case StagePlan::Kind::kSupervised:
    case StagePlan::Kind::kZS2:
      return true;
  }
  return true;
}

}  // namespace

bool Trainer::run_stage(const StagePlan& stage) {
  LossParts train_acc;
  std::size_t train_batches = 0;
  std::function<bool(const std::string&)> filter =
      [&stage](const std::string& name) {
        return stage_trains_param(stage.kind, name);
      };

  while (state_.step < stage.max_steps &&
         state_.bad_vals < cfg_.schedule.patience) {
    if (steps_left_ == 0) return false;
    if (steps_left_ > 0) --steps_left_;
    int step = state_.step + 1;
    bool tts_batch = false;
    if (stage.kind == StagePlan::Kind::kZS2) {
      // Interleave: one translation batch, then `ratio` synthesis batches.
      int cycle = 1 + cfg_.schedule.tts_batch_ratio;
      tts_batch = (state_.step % cycle) != 0;
    }
    StreamState& stream = tts_batch ? state_.stream_b : state_.stream_a;
    const auto& split = data_.at(train_split_for(stage.kind, tts_batch));
    auto batch = next_batch(split, stream, tts_batch ? 1 : 0);

    double lr = cfg_.schedule.lr;
    if (cfg_.schedule.warmup_steps > 0)
      lr *= std::min(1.0, static_cast<double>(step) /
                              static_cast<double>(cfg_.schedule.warmup_steps));

    RngState drop(seed_ ^ (0x9e3779b97f4a7c15ULL *
                           (state_.stage_index + 1)),
                  state_.drop_counter);
    model_->store().zero_grad();
    LossParts batch_parts;
    for (std::size_t idx : batch) {
      const auto& sample = split[idx];
      SampleLoss s;
      try {
        s = sample_loss(stage.kind, tts_batch, sample, drop, true);
      } catch (const InfeasibleTarget& e) {
        throw InfeasibleTarget(format_msg(e.what(), " (sample '",
                                          sample.text, "' in ",
                                          train_split_for(stage.kind,
                                                          tts_batch),
                                          ")"));
      }
      nn::backward(nn::scale(s.loss, 1.0 / static_cast<double>(batch.size())));
      batch_parts += s.parts;
    }
    batch_parts /= static_cast<double>(batch.size());
    train_acc += batch_parts;
    ++train_batches;
    state_.drop_counter = drop.counter();
    model_->store().clip_grad_norm(cfg_.schedule.clip_norm);
    model_->store().adam_step(lr, 0.9, 0.999, 1e-8, &filter);
    state_.step = step;

    if (step % cfg_.schedule.val_interval == 0 || step == stage.max_steps) {
      validate_and_checkpoint(stage, train_acc, train_batches);
      train_acc = LossParts{};
      train_batches = 0;
      if (state_.bad_vals >= cfg_.schedule.patience) break;
    }
  }
  finish_stage(stage);
  return true;
}

double Trainer::validation_loss(const StagePlan& stage, LossParts* parts,
                                double* align_metric,
                                double* uniformity_metric) {
  RngState rng(0);
  LossParts acc;
  std::size_t count = 0;
  std::vector<align::EncoderPair> pairs;

  auto eval_split = [&](const std::string& name, StagePlan::Kind kind,
                        bool tts_batch) {
    const auto& dev = data_.at(name);
    for (const auto& sample : dev) {
      SampleLoss s = sample_loss(kind, tts_batch, sample, rng, false);
      acc += s.parts;
      if (s.pair) pairs.push_back(std::move(*s.pair));
      ++count;
    }
  };

  switch (stage.kind) {
    case StagePlan::Kind::kS2TTOnly:
      eval_split("s2tt_dev", stage.kind, false);
      break;
    case StagePlan::Kind::kTTSOnly:
      eval_split("tts_dev", stage.kind, false);
      break;
    case StagePlan::Kind::kZS1:
      eval_split("s2tt_dev", stage.kind, false);
      break;
    case StagePlan::Kind::kSupervised: {
      eval_split("s2st_dev", stage.kind, false);
      const auto& dev = data_.at("s2st_dev");
      std::size_t cap = std::min<std::size_t>(dev.size(), 48);
      for (std::size_t i = 0; i < cap; ++i)
        pairs.push_back(pipeline::encoder_pair(*model_, dev[i], rng, false));
      break;
    }
    case StagePlan::Kind::kZS2: {
      eval_split("s2tt_dev", stage.kind, false);
      eval_split("tts_dev", stage.kind, true);
      break;
    }
  }
  acc /= static_cast<double>(std::max<std::size_t>(count, 1));
  if (parts) *parts = acc;
  if (align_metric) *align_metric = align::alignment_metric(pairs);
  if (uniformity_metric) *uniformity_metric = align::uniformity_metric(pairs);
  // Stage 1 stops on the dev CTC plateau; everything else on the total.
  if (stage.kind == StagePlan::Kind::kZS1) return acc.ctc;
  return acc.total;
}

namespace {

ordered_json parts_json(const LossParts& parts) {
  ordered_json j;
  j["s2tt"] = parts.s2tt;
  j["ctc"] = parts.ctc;
  j["tts_l1"] = parts.tts_l1;
  j["tts_dur"] = parts.tts_dur;
  j["align"] = parts.align_value;
  j["total"] = parts.total;
  return j;
}

}  // namespace

void Trainer::validate_and_checkpoint(const StagePlan& stage,
                                      const LossParts& train_parts,
                                      std::size_t train_batches) {
  LossParts val_parts;
  double align_metric = 0.0, uniformity = 0.0;
  double val_loss = validation_loss(stage, &val_parts, &align_metric,
                                    &uniformity);

  LossParts train_avg = train_parts;
  if (train_batches > 0)
    train_avg /= static_cast<double>(train_batches);

  ordered_json record;
  record["stage"] = stage.name;
  record["step"] = state_.step;
  record["train"] = parts_json(train_avg);
  record["val"] = parts_json(val_parts);
  record["val_loss"] = val_loss;
  bool has_pairs = stage.kind == StagePlan::Kind::kZS2 ||
                   stage.kind == StagePlan::Kind::kSupervised;
  if (has_pairs) {
    record["alignment_metric"] = align_metric;
    record["uniformity_metric"] = uniformity;
  }
  {
    std::ofstream os(metrics_path(), std::ios::app);
    os << record.dump() << '\n';
  }
  ++state_.jsonl_records;

  // Snapshot for best-k averaging.
  std::string snap = snap_path(state_.stage_index, state_.step);
  model_->store().save(snap);
  state_.best_snaps.emplace_back(val_loss, state_.step);
  std::sort(state_.best_snaps.begin(), state_.best_snaps.end());
  while (state_.best_snaps.size() >
         static_cast<std::size_t>(cfg_.schedule.avg_best_k)) {
    auto worst = state_.best_snaps.back();
    state_.best_snaps.pop_back();
    fs::remove(snap_path(state_.stage_index, worst.second));
  }

  if (!state_.has_best || val_loss < state_.best_val - 1e-12) {
    state_.best_val = val_loss;
    state_.has_best = true;
    state_.bad_vals = 0;
  } else {
    ++state_.bad_vals;
  }

  model_->store().save_with_optimizer(out_dir_ + "/last.bin");
  save_state();
}

void Trainer::finish_stage(const StagePlan& stage) {
  if (!state_.best_snaps.empty()) {
    std::vector<std::string> paths;
    for (const auto& [loss, step] : state_.best_snaps)
      paths.push_back(snap_path(state_.stage_index, step));
    model_->store().load_average(paths);
    for (const auto& p : paths) fs::remove(p);
  }
  model_->store().save(out_dir_ + "/" + stage.name + ".bin");
  model_->store().reset_optimizer();

  ++state_.stage_index;
  state_.step = 0;
  state_.drop_counter = 0;
  state_.stream_a = StreamState{};
  state_.stream_b = StreamState{};
  state_.best_val = 0.0;
  state_.has_best = false;
  state_.bad_vals = 0;
  state_.best_snaps.clear();
  model_->store().save_with_optimizer(out_dir_ + "/last.bin");
  save_state();
}

std::string Trainer::snap_path(std::size_t stage_index, int step) const {
  return out_dir_ + "/snap_" + std::to_string(stage_index) + "_" +
         std::to_string(step) + ".bin";
}

void Trainer::save_state() {
  ordered_json j;
  j["stage_index"] = state_.stage_index;
  j["step"] = state_.step;
  j["drop_counter"] = state_.drop_counter;
  j["stream_a"] = {{"epoch", state_.stream_a.epoch},
                   {"pos", state_.stream_a.pos}};
  j["stream_b"] = {{"epoch", state_.stream_b.epoch},
                   {"pos", state_.stream_b.pos}};
  j["best_val"] = state_.best_val;
  j["has_best"] = state_.has_best;
  j["bad_vals"] = state_.bad_vals;
  ordered_json snaps = ordered_json::array();
  for (const auto& [loss, step] : state_.best_snaps)
    snaps.push_back({{"val_loss", loss}, {"step", step}});
  j["best_snaps"] = snaps;
  j["jsonl_records"] = state_.jsonl_records;
  j["done"] = state_.done;
  j["seed"] = seed_;
  std::ofstream os(out_dir_ + "/state.json", std::ios::trunc);
  os << j.dump(2) << '\n';
}

bool Trainer::load_state() {
  std::ifstream is(out_dir_ + "/state.json");
  if (!is) return false;
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) return false;
  if (j.value("seed", seed_) != seed_)
    throw ConfigError("resume state was written with a different seed");
  state_ = RunState{};
  state_.stage_index = j.at("stage_index").get<std::size_t>();
  state_.step = j.at("step").get<int>();
  state_.drop_counter = j.at("drop_counter").get<std::uint64_t>();
  state_.stream_a = {j.at("stream_a").at("epoch").get<std::size_t>(),
                     j.at("stream_a").at("pos").get<std::size_t>()};
  state_.stream_b = {j.at("stream_b").at("epoch").get<std::size_t>(),
                     j.at("stream_b").at("pos").get<std::size_t>()};
  state_.best_val = j.at("best_val").get<double>();
  state_.has_best = j.at("has_best").get<bool>();
  state_.bad_vals = j.at("bad_vals").get<int>();
  for (const auto& snap : j.at("best_snaps"))
    state_.best_snaps.emplace_back(snap.at("val_loss").get<double>(),
                                   snap.at("step").get<int>());
  state_.jsonl_records = j.at("jsonl_records").get<std::size_t>();
  state_.done = j.at("done").get<bool>();

  model_->store().load_with_optimizer(out_dir_ + "/last.bin");

  // Drop any metrics records written after the state snapshot.
  std::ifstream mf(metrics_path());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(mf, line)) lines.push_back(line);
  mf.close();
  if (lines.size() > state_.jsonl_records) lines.resize(state_.jsonl_records);
  std::ofstream os(metrics_path(), std::ios::trunc);
  for (const auto& l : lines) os << l << '\n';
  return true;
}

}  // namespace ctcbridge::trainer
