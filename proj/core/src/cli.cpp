// core/src/cli.cpp

#include "ctcbridge/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "ctcbridge/checks.hpp"
#include "ctcbridge/config.hpp"
#include "ctcbridge/trainer.hpp"

namespace ctcbridge::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

unsigned worker_threads() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("CTCBRIDGE_THREADS");
  if (!env) return 1;
  long parsed = std::strtol(env, nullptr, 10);
  if (parsed < 1) return 1;
  return std::min<unsigned>(static_cast<unsigned>(parsed), hw);
}

namespace {

struct GridRow {
  bool use_mse;
  bool use_ctr;
  nn::Similarity similarity;
};

const std::vector<GridRow> kAlignGrid = {
    {false, false, nn::Similarity::kNegL1},
    {true, false, nn::Similarity::kNegL1},
    {false, true, nn::Similarity::kNegL1},
    {false, true, nn::Similarity::kNegL2Squared},
    {false, true, nn::Similarity::kDot},
    {true, true, nn::Similarity::kNegL1},
    {true, true, nn::Similarity::kNegL2Squared},
    {true, true, nn::Similarity::kDot},
};

double median(std::vector<double> values) {
  CTCB_CHECK(!values.empty(), "median of nothing");
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

int cmd_gen_data(const config::ExperimentConfig& cfg, std::uint64_t seed) {
  synth::Corpus corpus = synth::gen_corpus(cfg.task, seed);
  auto report = synth::validate_corpus(corpus);
  synth::write_corpus(corpus, cfg.corpus_dir);
  std::printf("corpus written to %s\n", cfg.corpus_dir.c_str());
  std::printf("  triples=%zu  disjoint_texts=%s  asr_recovery=%.4f\n",
              report.triples_checked, report.disjoint_texts ? "yes" : "no",
              report.recovery_rate);
  for (const auto& [name, triples] : corpus.splits)
    std::printf("  split %-12s %zu\n", name.c_str(), triples.size());
  if (!report.ok()) {
    for (const auto& e : report.errors)
      std::fprintf(stderr, "validation: %s\n", e.c_str());
    throw InvariantBreach("corpus validation failed");
  }
  return 0;
}

pipeline::EvalMetrics eval_checkpoint(const config::ExperimentConfig& cfg,
                                      const std::string& checkpoint,
                                      const std::string& split,
                                      const std::string& mode) {
  synth::CorpusReader reader(cfg.corpus_dir);
  auto model = trainer::build_model(cfg, reader, cfg.seed);
  if (!checkpoint.empty()) model->store().load(checkpoint);
  auto samples = reader.load_split(split);
  return pipeline::evaluate(*model, samples, reader.lexicon(),
                            reader.subwords(), reader.base(),
                            pipeline::inference_mode_from_name(mode));
}

ordered_json metrics_json(const pipeline::EvalMetrics& m) {
  ordered_json j;
  j["token_accuracy"] = m.token_accuracy;
  j["ngram_score"] = m.ngram_score;
  j["alignment_metric"] = m.alignment;
  j["uniformity_metric"] = m.uniformity;
  j["empty_output_rate"] = m.empty_output_rate;
  j["samples"] = m.samples;
  return j;
}

int cmd_train(config::ExperimentConfig cfg, const std::string& mode,
              std::uint64_t seed, const std::string& out) {
  if (!mode.empty()) cfg.schedule.mode = mode;
  cfg.validate();
  std::string out_dir = out.empty()
                            ? cfg.out_dir + "/" + cfg.schedule.mode +
                                  "_seed" + std::to_string(seed)
                            : out;
  if (cfg.schedule.mode == "zeroshot" && !cfg.align.use_mse &&
      !cfg.align.use_ctr) {
    std::fprintf(stderr,
                 "warning: both alignment losses disabled; zero-shot "
                 "transfer is expected to collapse\n");
  }
  trainer::Trainer t(cfg, seed, out_dir);
  t.train();
  std::printf("training complete: %s\n", t.final_checkpoint_path().c_str());
  std::printf("metrics: %s\n", t.metrics_path().c_str());
  return 0;
}

int cmd_eval(const config::ExperimentConfig& cfg,
             const std::string& checkpoint, const std::string& split,
             const std::string& mode, const std::string& out) {
  auto metrics = eval_checkpoint(cfg, checkpoint, split, mode);
  ordered_json j;
  j["checkpoint"] = checkpoint;
  j["split"] = split;
  j["mode"] = mode;
  j["metrics"] = metrics_json(metrics);
  std::string dump = j.dump(2);
  std::printf("%s\n", dump.c_str());
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream os(out + "/eval_" + split + "_" + mode + ".json",
                     std::ios::trunc);
    os << dump << '\n';
  }
  return 0;
}

struct CellResult {
  double accuracy = 0.0;
  double alignment = 0.0;
  double uniformity = 0.0;
};

CellResult run_grid_cell(const config::ExperimentConfig& base,
                         const GridRow& row, std::uint64_t seed,
                         const std::string& stem_checkpoint,
                         const std::string& cell_dir) {
  config::ExperimentConfig cfg = base;
  cfg.schedule.mode = "zeroshot";
  cfg.align.use_mse = row.use_mse;
  cfg.align.use_ctr = row.use_ctr;
  cfg.align.similarity = row.similarity;
  std::vector<trainer::StagePlan> plan = {
      {"stage2", trainer::StagePlan::Kind::kZS2, cfg.schedule.stage2_steps}};
  trainer::Trainer t(cfg, seed, cell_dir, plan, stem_checkpoint);
  t.train();
  auto metrics = eval_checkpoint(cfg, t.final_checkpoint_path(), "test",
                                 "pipeline");
  return {metrics.token_accuracy, metrics.alignment, metrics.uniformity};
}

int cmd_ablate(const config::ExperimentConfig& base, const std::string& out) {
  std::string out_dir = out.empty() ? base.out_dir + "/ablate_align" : out;
  fs::create_directories(out_dir);

  // One stage-1 stem per seed, shared by every grid row.
  std::map<std::uint64_t, std::string> stems;
  for (std::uint64_t seed : base.seeds) {
    config::ExperimentConfig cfg = base;
    cfg.schedule.mode = "zeroshot";
    std::vector<trainer::StagePlan> plan =
        trainer::plan_stages(cfg.schedule);
    CTCB_CHECK(!plan.empty() && plan.back().name == "stage2",
               "ablation expects a zero-shot plan ending in stage2");
    plan.pop_back();
    std::string stem_dir = out_dir + "/seed" + std::to_string(seed) +
                           "/stem";
    trainer::Trainer t(cfg, seed, stem_dir, plan);
    t.train();
    stems[seed] = t.final_checkpoint_path();
  }

  struct RowResult {
    GridRow row;
    std::vector<CellResult> by_seed;
  };
  std::vector<RowResult> results(kAlignGrid.size());
  std::vector<std::pair<std::size_t, std::uint64_t>> cells;
  for (std::size_t r = 0; r < kAlignGrid.size(); ++r) {
    results[r].row = kAlignGrid[r];
    results[r].by_seed.resize(base.seeds.size());
    for (std::size_t s = 0; s < base.seeds.size(); ++s)
      cells.emplace_back(r, s);
  }

  unsigned workers = std::min<unsigned>(worker_threads(),
                                        static_cast<unsigned>(cells.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      auto [r, s] = cells[i];
      std::uint64_t seed = base.seeds[s];
      std::string cell_dir = out_dir + "/seed" + std::to_string(seed) +
                             "/row" + std::to_string(r);
      results[r].by_seed[s] = run_grid_cell(base, kAlignGrid[r], seed,
                                            stems.at(seed), cell_dir);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  std::string csv_path = out_dir + "/ablate_align.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  csv << "use_mse,use_ctr,similarity";
  for (std::uint64_t seed : base.seeds) csv << ",acc_seed" << seed;
  for (std::uint64_t seed : base.seeds) csv << ",align_seed" << seed;
  for (std::uint64_t seed : base.seeds) csv << ",unif_seed" << seed;
  csv << ",acc_median,align_median,unif_median\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : results) {
    csv << (r.row.use_mse ? 1 : 0) << ',' << (r.row.use_ctr ? 1 : 0) << ','
        << (r.row.use_ctr ? align::similarity_name(r.row.similarity)
                          : std::string("-"));
    std::vector<double> accs, aligns, unifs;
    for (const auto& c : r.by_seed) {
      accs.push_back(c.accuracy);
      aligns.push_back(c.alignment);
      unifs.push_back(c.uniformity);
    }
    for (double v : accs) csv << ',' << fmt(v);
    for (double v : aligns) csv << ',' << fmt(v);
    for (double v : unifs) csv << ',' << fmt(v);
    csv << ',' << fmt(median(accs)) << ',' << fmt(median(aligns)) << ','
        << fmt(median(unifs)) << '\n';
  }
  std::printf("ablation table written to %s\n", csv_path.c_str());
  return 0;
}

int cmd_check(const std::string& suite) {
  auto reports = checks::run_suites(suite);
  bool all_passed = true;
  for (const auto& r : reports) {
    std::printf("%s\n", r.summary().c_str());
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"ctcbridge: CTC vocabulary adaptor and zero-shot two-pass "
               "translation-to-signal pipeline"};
  app.require_subcommand(1);

  std::string config_path, mode, out, checkpoint, split = "test";
  std::string suite = "all";
  std::int64_t seed_flag = -1;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON")
        ->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data",
                                     "generate the synthetic corpus");
  add_config(gen);
  gen->add_option("--seed", seed_flag, "generation seed override");

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_config(train);
  train->add_option("--mode", mode, "supervised | zeroshot | cascade");
  train->add_option("--seed", seed_flag, "seed override");
  train->add_option("--out", out, "output directory override");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint path")
      ->required();
  eval->add_option("--split", split, "corpus split (default test)");
  eval->add_option("--mode", mode, "pipeline | cascade | groundtruth")
      ->required();
  eval->add_option("--out", out, "directory for the metrics JSON");

  CLI::App* ablate = app.add_subcommand(
      "ablate-align", "run the alignment-objective ablation grid");
  add_config(ablate);
  ablate->add_option("--out", out, "output directory override");

  CLI::App* check = app.add_subcommand("check", "run verification suites");
  check->add_option("--suite", suite, "ctc | grad | invariants | all");

  CLI::App* ctc_check = app.add_subcommand(
      "ctc-check", "run the CTC oracle-equality suite");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      auto cfg = config::ExperimentConfig::load(config_path);
      return cmd_gen_data(cfg, seed_flag >= 0
                                   ? static_cast<std::uint64_t>(seed_flag)
                                   : cfg.seed);
    }
    if (train->parsed()) {
      auto cfg = config::ExperimentConfig::load(config_path);
      return cmd_train(cfg, mode,
                       seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag)
                                      : cfg.seed,
                       out);
    }
    if (eval->parsed()) {
      auto cfg = config::ExperimentConfig::load(config_path);
      return cmd_eval(cfg, checkpoint, split, mode, out);
    }
    if (ablate->parsed()) {
      auto cfg = config::ExperimentConfig::load(config_path);
      return cmd_ablate(cfg, out);
    }
    if (check->parsed()) return cmd_check(suite);
    if (ctc_check->parsed()) return cmd_check("ctc");
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const TokenizeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace ctcbridge::cli
