// core/src/checks.cpp

#include "ctcbridge/checks.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "ctcbridge/adaptor.hpp"
#include "ctcbridge/align.hpp"
#include "ctcbridge/ctc.hpp"
#include "ctcbridge/pipeline.hpp"

namespace ctcbridge::checks {

namespace {

nn::Tensor random_param(nn::Shape shape, RngState& rng, double scale = 1.0) {
  std::vector<double> data(nn::shape_numel(shape));
  for (auto& x : data) x = scale * rng.normal();
  return nn::Tensor::param(std::move(shape), std::move(data));
}

nn::Tensor random_log_probs(std::size_t frames, std::size_t classes,
                            RngState& rng) {
  return nn::log_softmax_rows(random_param({frames, classes}, rng, 1.5));
}

std::vector<int> random_target(RngState& rng, int vsize,
                               std::size_t max_len, bool allow_empty) {
  std::vector<int> t(rng.uniform_int(max_len) + (allow_empty ? 0 : 1));
  for (auto& x : t) x = static_cast<int>(rng.uniform_int(vsize));
  return t;
}

// Central finite differences on randomly sampled coordinates.
double fd_max_err(const std::function<nn::Tensor()>& build,
                  const std::vector<nn::Tensor>& inputs,
                  std::size_t coords, RngState& rng, double h = 1e-5) {
  for (const auto& t : inputs) t.impl()->grad.clear();
  auto loss = build();
  nn::backward(loss);
  std::vector<std::vector<double>> grads;
  grads.reserve(inputs.size());
  for (const auto& t : inputs) {
    auto impl = t.impl();
    if (impl->grad.size() == impl->value.size())
      grads.emplace_back(impl->grad.begin(), impl->grad.end());
    else
      grads.emplace_back(impl->value.size(), 0.0);  // unreachable input
  }

  double max_err = 0.0;
  for (std::size_t c = 0; c < coords; ++c) {
    std::size_t which = rng.uniform_int(inputs.size());
    auto impl = inputs[which].impl();
    std::size_t i = rng.uniform_int(impl->value.size());
    double saved = impl->value[i];
    impl->value[i] = saved + h;
    double up = build().item();
    impl->value[i] = saved - h;
    double down = build().item();
    impl->value[i] = saved;
    double fd = (up - down) / (2.0 * h);
    double g = grads[which][i];
    max_err = std::max(max_err, std::abs(fd - g) /
                                    std::max({1.0, std::abs(fd),
                                              std::abs(g)}));
  }
  return max_err;
}

struct TinyWorld {
  pipeline::ModelConfig model_cfg;
  adaptor::AdaptorConfig adaptor_cfg;
  std::unique_ptr<pipeline::ComposedModel> model;
  std::size_t subword_count = 5;
  std::size_t base_count = 4;
  std::size_t frame_dim = 4;
  std::size_t signal_dim = 4;

  explicit TinyWorld(std::uint64_t seed) {
    model_cfg.dim = 8;
    model_cfg.heads = 2;
    model_cfg.ffn_dim = 16;
    model_cfg.s2tt_enc_layers = 1;
    model_cfg.s2tt_dec_layers = 1;
    model_cfg.tts_enc_layers = 1;
    model_cfg.tts_dec_layers = 1;
    model_cfg.dur_hidden = 8;
    model_cfg.dropout = 0.0;
    model_cfg.max_decode_len = 12;
    adaptor_cfg.upsample = 3;
    adaptor_cfg.layers = 1;
    adaptor_cfg.model_dim = 8;
    adaptor_cfg.heads = 2;
    adaptor_cfg.ffn_dim = 16;
    model = std::make_unique<pipeline::ComposedModel>(
        model_cfg, adaptor_cfg, frame_dim, subword_count, base_count,
        signal_dim, seed);
  }

  synth::Triple random_triple(RngState& rng) const {
    synth::Triple t;
    std::size_t n = 1 + rng.uniform_int(3);
    t.yw.resize(n);
    for (auto& x : t.yw)
      x = static_cast<int>(rng.uniform_int(subword_count));
    // Keep the base-token target feasible for lambda * n frames.
    std::size_t max_m = std::max<std::size_t>(1, 3 * n / 2);
    t.yv.resize(1 + rng.uniform_int(max_m));
    for (auto& x : t.yv) x = static_cast<int>(rng.uniform_int(base_count));
    while (ctc::min_feasible_frames(t.yv) >
           static_cast<std::size_t>(adaptor_cfg.upsample) * n)
      t.yv.pop_back();
    std::size_t src_rows = 2 * n;
    std::vector<double> src(src_rows * frame_dim);
    for (auto& x : src) x = rng.normal();
    t.source = nn::Tensor::from_data({src_rows, frame_dim}, std::move(src));
    t.has_source = true;
    t.durations.resize(t.yv.size());
    std::size_t total = 0;
    for (auto& d : t.durations) {
      d = 2 + static_cast<int>(rng.uniform_int(2));
      total += static_cast<std::size_t>(d);
    }
    std::vector<double> sig(total * signal_dim);
    for (auto& x : sig) x = rng.normal();
    t.signal = nn::Tensor::from_data({total, signal_dim}, std::move(sig));
    t.has_signal = true;
    return t;
  }

  std::vector<nn::Tensor> params() const {
    std::vector<nn::Tensor> out;
    for (const auto& [name, t] : model->store().params()) out.push_back(t);
    return out;
  }
};

void note_failure(SuiteReport& report, const std::string& msg) {
  if (report.failures.size() < 8) report.failures.push_back(msg);
}

}  // namespace

std::string SuiteReport::summary() const {
  std::ostringstream os;
  os << "suite " << name << ": " << (passed ? "PASS" : "FAIL")
     << "  cases=" << cases << "  max_deviation=" << max_deviation;
  for (const auto& f : failures) os << "\n    " << f;
  return os.str();
}

SuiteReport run_ctc_suite(std::size_t instances, std::uint64_t seed,
                          const CollapseFn* collapse_override) {
  SuiteReport report;
  report.name = "ctc";
  RngState rng(seed);
  CollapseFn collapse_fn = collapse_override
                               ? *collapse_override
                               : CollapseFn(&vocab::collapse);
  std::size_t done = 0;
  while (done < instances) {
    int vsize = 1 + static_cast<int>(rng.uniform_int(3));
    std::size_t frames = 1 + rng.uniform_int(14);
    auto target = random_target(rng, vsize, 4, true);
    if (ctc::min_feasible_frames(target) > frames) continue;
    nn::Tensor lp = random_log_probs(frames, vsize + 1, rng);

    double fwd = ctc::ctc_loss(lp, target).item();
    double bf = ctc::ctc_loss_bruteforce(lp, target);
    report.max_deviation = std::max(report.max_deviation,
                                    std::abs(fwd - bf));
    if (std::abs(fwd - bf) > 1e-9)
      note_failure(report, "forward/brute-force mismatch");

    if (!target.empty()) {
      auto path = ctc::viterbi_forced_align(lp, target);
      if (collapse_fn(path.labels, vsize).ids != target)
        note_failure(report, "collapse of forced alignment != target");
      auto all = vocab::enumerate_inverse_collapse(target, frames, vsize);
      double best = -std::numeric_limits<double>::infinity();
      std::vector<int> best_path;
      bool members_ok = true;
      for (const auto& cand : all) {
        members_ok = members_ok &&
                     collapse_fn(cand, vsize).ids == target;
        double s = 0.0;
        for (std::size_t t = 0; t < frames; ++t)
          s += lp.at(t, static_cast<std::size_t>(cand[t]));
        if (s > best) {
          best = s;
          best_path = cand;
        }
      }
      if (!members_ok)
        note_failure(report, "enumerated member fails to collapse back");
      report.max_deviation = std::max(report.max_deviation,
                                      std::abs(path.log_prob - best));
      if (path.labels != best_path)
        note_failure(report, "viterbi path != enumerated argmax");
      if (path.log_prob > -fwd + 1e-12)
        note_failure(report, "path probability exceeds the marginal");
    }
    ++done;
  }
  report.cases = done;
  report.passed = report.failures.empty() && report.max_deviation < 1e-9;
  return report;
}

SuiteReport run_grad_suite(std::size_t instances_per_loss,
                           std::uint64_t seed) {
  SuiteReport report;
  report.name = "grad";
  RngState rng(seed);
  RngState drop(0);
  constexpr double kTol = 1e-4;
  constexpr std::size_t kCoords = 10;

  auto run_case = [&](const std::string& label,
                      const std::function<nn::Tensor()>& build,
                      const std::vector<nn::Tensor>& inputs) {
    double err = fd_max_err(build, inputs, kCoords, rng);
    report.max_deviation = std::max(report.max_deviation, err);
    ++report.cases;
    if (err >= kTol) note_failure(report, label + " gradient mismatch");
  };

  for (std::size_t i = 0; i < instances_per_loss; ++i) {
    // CTC through the projection head.
    {
      int vsize = 2 + static_cast<int>(rng.uniform_int(2));
      std::size_t frames = 3 + rng.uniform_int(4);
      auto target = random_target(rng, vsize, 3, false);
      while (ctc::min_feasible_frames(target) > frames) target.pop_back();
      nn::Tensor logits = random_param(
          {frames, static_cast<std::size_t>(vsize) + 1}, rng);
      run_case("ctc", [&] {
        return ctc::ctc_loss(nn::log_softmax_rows(logits), target);
      }, {logits});
    }
    // MSE and the three contrastive similarities.
    {
      nn::Tensor ch = random_param({3, 4}, rng);
      nn::Tensor ce = random_param({3, 4}, rng);
      run_case("mse", [&] { return align::mse_loss({ch, ce}); }, {ch, ce});
      for (auto kind : {nn::Similarity::kNegL1,
                        nn::Similarity::kNegL2Squared, nn::Similarity::kDot}) {
        align::AlignConfig cfg;
        cfg.similarity = kind;
        run_case("ctr_" + align::similarity_name(kind), [&] {
          return align::contrastive_loss({ch, ce}, cfg);
        }, {ch, ce});
      }
    }
    // Model losses on a fresh tiny world each instance.
    {
      TinyWorld world(seed * 1000 + i);
      auto params = world.params();
      synth::Triple sample = world.random_triple(rng);
      run_case("s2tt_ce", [&] {
        return pipeline::s2tt_loss(world.model->s2tt(), sample, 0.1, drop,
                                   false).loss;
      }, params);
      run_case("tts", [&] {
        nn::Tensor enc = world.model->tts().encode_embedding(sample.yv, drop,
                                                             false);
        return pipeline::tts_loss(world.model->tts(), enc, sample, drop,
                                  false).loss;
      }, params);
      run_case("supervised_total", [&] {
        return pipeline::supervised_loss(*world.model, sample, 1.0, drop,
                                         false).loss;
      }, params);
      align::AlignConfig align_cfg;
      synth::Triple tts_sample = world.random_triple(rng);
      run_case("zeroshot_total", [&] {
        nn::Tensor a = pipeline::zs_stage2_s2tt_loss(*world.model, sample,
                                                     align_cfg, drop, false)
                           .loss;
        nn::Tensor b = pipeline::zs_stage2_tts_loss(*world.model, tts_sample,
                                                    drop, false).loss;
        return nn::add(a, b);
      }, params);
    }
  }
  report.passed = report.failures.empty() && report.max_deviation < kTol;
  return report;
}

SuiteReport run_invariant_suite(std::uint64_t seed) {
  SuiteReport report;
  report.name = "invariants";
  RngState rng(seed);

  // Softmax rows sum to one.
  for (int trial = 0; trial < 50; ++trial) {
    nn::Tensor x = random_param({6, 7}, rng, 3.0);
    nn::Tensor y = nn::softmax_rows(x);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) s += y.at(i, j);
      report.max_deviation = std::max(report.max_deviation,
                                      std::abs(s - 1.0));
    }
    ++report.cases;
  }
  if (report.max_deviation > 1e-12)
    note_failure(report, "softmax row normalization drift");

  // Merge weights sum to one; training-mode length law.
  TinyWorld world(seed);
  RngState drop(0);
  double merge_dev = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    synth::Triple t = world.random_triple(rng);
    nn::Tensor hw = random_param(
        {t.yw.size(), static_cast<std::size_t>(world.model_cfg.dim)}, rng);
    auto result = world.model->vocab_adaptor().adapt_train(hw, t.yv, drop,
                                                           false);
    if (result.hv.rows() != t.yv.size())
      note_failure(report, "training-mode merge row count != target length");
    if (vocab::collapse(result.path.labels,
                        static_cast<int>(world.base_count)).ids != t.yv)
      note_failure(report, "forced path does not collapse to the target");
    // All-ones frames turn each merged row into its weight sum.
    nn::Tensor ones = nn::Tensor::full(
        {static_cast<std::size_t>(world.adaptor_cfg.upsample) * t.yw.size(),
         2},
        1.0);
    auto spans = adaptor::segments_from_path(result.path.labels,
                                             static_cast<int>(
                                                 world.base_count));
    nn::Tensor merged = adaptor::merge_segments(ones, spans,
                                                result.log_probs);
    for (std::size_t i = 0; i < merged.rows(); ++i)
      merge_dev = std::max(merge_dev, std::abs(merged.at(i, 0) - 1.0));
    ++report.cases;
  }
  report.max_deviation = std::max(report.max_deviation, merge_dev);
  if (merge_dev > 1e-12)
    note_failure(report, "merge weights do not sum to one");

  // Eval-mode determinism.
  {
    synth::Triple t = world.random_triple(rng);
    RngState r1(1), r2(1);
    auto a = pipeline::supervised_loss(*world.model, t, 1.0, r1, false);
    auto b = pipeline::supervised_loss(*world.model, t, 1.0, r2, false);
    if (a.loss.item() != b.loss.item())
      note_failure(report, "eval-mode forward is not deterministic");
    ++report.cases;
  }

  // Checkpoint round trip is bit exact.
  {
    namespace fs = std::filesystem;
    auto path = (fs::temp_directory_path() / "ctcbridge_inv_ckpt.bin")
                    .string();
    auto before = world.model->store().snapshot_values();
    world.model->store().save(path);
    world.model->store().load(path);
    if (world.model->store().snapshot_values() != before)
      note_failure(report, "checkpoint round trip changed parameters");
    fs::remove(path);
    ++report.cases;
  }

  report.passed = report.failures.empty();
  return report;
}

std::vector<SuiteReport> run_suites(const std::string& which) {
  std::vector<SuiteReport> reports;
  if (which == "ctc" || which == "all") reports.push_back(run_ctc_suite());
  if (which == "grad" || which == "all") reports.push_back(run_grad_suite());
  if (which == "invariants" || which == "all")
    reports.push_back(run_invariant_suite());
  if (reports.empty())
    throw ConfigError("unknown suite '" + which +
                      "' (expected ctc, grad, invariants, or all)");
  return reports;
}

}  // namespace ctcbridge::checks
