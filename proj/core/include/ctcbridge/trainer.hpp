// ctcbridge/trainer.hpp
//
// Stage-based training driver: pretraining, supervised finetuning, and the
// two-stage zero-shot recipe, with warmup, plateau early-stopping,
// best-k checkpoint averaging, JSONL metrics, and exact resume from the
// last validation boundary.

#ifndef CTCBRIDGE_TRAINER_HPP_
#define CTCBRIDGE_TRAINER_HPP_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ctcbridge/config.hpp"
#include "ctcbridge/pipeline.hpp"
#include "ctcbridge/synth.hpp"

namespace ctcbridge::trainer {

struct StagePlan {
  enum class Kind { kS2TTOnly, kTTSOnly, kSupervised, kZS1, kZS2 };
  std::string name;
  Kind kind;
  int max_steps;
};

// Stage sequence for a schedule: optional pretrains, then the mode's
// finetuning stages. Cascade trains the two halves independently with the
// same data exposure as the zero-shot pipeline.
std::vector<StagePlan> plan_stages(const config::TrainSchedule& schedule);

std::unique_ptr<pipeline::ComposedModel> build_model(
    const config::ExperimentConfig& cfg, const synth::CorpusReader& reader,
    std::uint64_t seed);

class Trainer {
 public:
  // `plan_override` replaces the schedule-derived stage list (used to
  // share a stage-1 stem across ablation rows); `init_checkpoint` warm
  // starts the parameters on a fresh run.
  Trainer(const config::ExperimentConfig& cfg, std::uint64_t seed,
          const std::string& out_dir,
          std::vector<StagePlan> plan_override = {},
          const std::string& init_checkpoint = "");

  // Runs every stage; picks up from the saved state when one exists.
  // A nonnegative `step_budget` stops after that many optimizer steps
  // (resume later from the last validation boundary).
  void train(int step_budget = -1);

  pipeline::ComposedModel& model() { return *model_; }
  synth::CorpusReader& reader() { return *reader_; }
  const std::string& out_dir() const { return out_dir_; }
  std::string final_checkpoint_path() const { return out_dir_ + "/final.bin"; }
  std::string metrics_path() const { return out_dir_ + "/metrics.jsonl"; }

  // Verifies the data-discipline audit; throws InvariantBreach on a
  // violation. Called automatically at the end of train().
  void assert_purity() const;

 private:
  struct StreamState {
    std::size_t epoch = 0;
    std::size_t pos = 0;
  };
  struct RunState {
    std::size_t stage_index = 0;
    int step = 0;
    std::uint64_t drop_counter = 0;
    StreamState stream_a, stream_b;
    double best_val = 0.0;
    bool has_best = false;
    int bad_vals = 0;
    std::vector<std::pair<double, int>> best_snaps;  // val loss, step
    std::size_t jsonl_records = 0;
    bool done = false;
  };

  bool run_stage(const StagePlan& stage);
  void finish_stage(const StagePlan& stage);
  std::vector<std::size_t> next_batch(const std::vector<synth::Triple>& data,
                                      StreamState& stream,
                                      std::uint64_t salt);
  pipeline::SampleLoss sample_loss(StagePlan::Kind kind, bool tts_batch,
                                   const synth::Triple& sample,
                                   RngState& rng, bool train);
  void validate_and_checkpoint(const StagePlan& stage,
                               const pipeline::LossParts& train_parts,
                               std::size_t train_batches);
  double validation_loss(const StagePlan& stage, pipeline::LossParts* parts,
                         double* align_metric, double* uniformity_metric);
  void save_state();
  bool load_state();
  std::string snap_path(std::size_t stage_index, int step) const;

  config::ExperimentConfig cfg_;
  std::uint64_t seed_;
  std::string out_dir_;
  std::unique_ptr<synth::CorpusReader> reader_;
  std::unique_ptr<pipeline::ComposedModel> model_;
  std::vector<StagePlan> stages_;
  std::map<std::string, std::vector<synth::Triple>> data_;
  RunState state_;
  int steps_left_ = -1;
};

}  // namespace ctcbridge::trainer

#endif  // CTCBRIDGE_TRAINER_HPP_
