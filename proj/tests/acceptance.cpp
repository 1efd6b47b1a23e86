// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Training-heavy criteria share models and run on a small thread
// pool; every result is deterministic per seed.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include "attnmixer/checkpoint.hpp"
#include "attnmixer/data.hpp"
#include "attnmixer/eval.hpp"
#include "attnmixer/grad_check.hpp"
#include "attnmixer/metrics.hpp"
#include "attnmixer/model.hpp"
#include "attnmixer/rng.hpp"
#include "attnmixer/train.hpp"
#include "support/test_support.hpp"

using namespace attnmixer;
using testsup::from_tensor;
using testsup::random_mat;
using testsup::to_tensor;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  if (!pass) ++g_failures;
}

void report_property(bool pass, const std::string& detail) {
  std::printf("[%s] property: %s\n", pass ? "PASS" : "FAIL", detail.c_str());
  if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criterion 1: end-to-end gradient fidelity with the entropy penalty

void criterion_gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  MixerConfig cfg;
  cfg.window = 4;
  cfg.variates = 3;
  cfg.rounds = 2;
  cfg.gru_hidden = 5;
  cfg.lambda = 0.01;
  cfg.smpr_mode = SmprMode::kEntropy;
  cfg.seed = 7;
  MixerParams params = init_params(cfg);
  auto list = params.parameters();
  Rng rng(100);
  Tensor x = to_tensor(random_mat(rng, cfg.window, cfg.variates));
  Tensor target = Tensor::scalar(0.6);
  const auto loss = [&] {
    MixerOutput out = mixer_forward(x, params, cfg, true);
    return total_loss(target, out.prediction, out.record, cfg.lambda, cfg.smpr_mode);
  };
  const double err = grad_check(loss, list, 1e-5);
  const double secs = seconds_since(t0);
  report(1, err < 1e-4 && secs < 30.0,
         "gradient fidelity: max relative error " + std::to_string(err) + " over " +
             std::to_string(list.size()) + " parameters (" + std::to_string(secs) + " s)");
}

// ---- criterion 2: the literal penalty is the constant K*(D+T), gradient-free

void criterion_literal_constancy() {
  Rng rng(200);
  double worst_value = 0.0, worst_grad = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    MixerConfig cfg;
    cfg.window = 2 + rng.below(7);
    cfg.variates = 2 + rng.below(7);
    cfg.rounds = 1 + rng.below(3);
    cfg.gru_hidden = 1 + rng.below(6);
    cfg.seed = rng.next_u64();
    MixerParams params = init_params(cfg);
    auto list = params.parameters();
    Tensor x = to_tensor(random_mat(rng, cfg.window, cfg.variates, -2.0, 2.0));
    MixerOutput out = mixer_forward(x, params, cfg, true);
    Tensor penalty = smpr_loss(out.record, SmprMode::kLiteral);
    const double expected = cfg.rounds * (cfg.variates + cfg.window);
    worst_value = std::max(worst_value, std::fabs(penalty.value() - expected));
    for (auto& p : list) p.tensor.zero_grad();
    backward(penalty);
    double norm = 0.0;
    for (const auto& p : list) {
      for (double g : p.tensor.grad()) norm += g * g;
    }
    worst_grad = std::max(worst_grad, std::sqrt(norm));
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "literal SMPR constancy: |value - K(D+T)| <= %.3g, gradient norm <= %.3g "
                "across 10 random models",
                worst_value, worst_grad);
  report(2, worst_value < 1e-9 && worst_grad < 1e-9, buf);
}

// ---- criterion 3: both blocks match the literal equation script

void criterion_block_oracles() {
  Rng rng(300);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int nodes = 2 + rng.below(5);
    const int width = 2 + rng.below(5);
    BlockParams p;
    p.query = {to_tensor(random_mat(rng, width, width)), to_tensor(random_mat(rng, 1, width))};
    p.key = {to_tensor(random_mat(rng, width, width)), to_tensor(random_mat(rng, 1, width))};
    p.value = {to_tensor(random_mat(rng, width, width)), to_tensor(random_mat(rng, 1, width))};
    p.norm_gain = to_tensor(random_mat(rng, 1, width, 0.5, 1.5));
    p.norm_bias = to_tensor(random_mat(rng, 1, width));
    const auto input = random_mat(rng, nodes, width);
    const double attn_scale = std::sqrt(static_cast<double>(width));
    const auto ref = testsup::block_ref(
        input, from_tensor(p.query.weight), from_tensor(p.query.bias)[0],
        from_tensor(p.key.weight), from_tensor(p.key.bias)[0], from_tensor(p.value.weight),
        from_tensor(p.value.bias)[0], from_tensor(p.norm_gain)[0], from_tensor(p.norm_bias)[0],
        attn_scale, kLayerNormEps);
    const BlockOutput via_samp = samp_forward(to_tensor(input), p, attn_scale);
    const BlockOutput via_tamp = tamp_forward(to_tensor(input), p, attn_scale);
    worst = std::max({worst, testsup::max_abs_diff(via_samp.state, ref.state),
                      testsup::max_abs_diff(via_samp.attention, ref.attention),
                      testsup::max_abs_diff(via_samp.logits, ref.logits),
                      testsup::max_abs_diff(via_tamp.state, ref.state)});
  }
  report(3, worst < 1e-10,
         "block oracles: max deviation " + std::to_string(worst) + " over 20 random cases");
}

// ---- criterion 4: tied query/key gives symmetric logits everywhere

void criterion_symmetry() {
  Rng rng(400);
  double worst = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    MixerConfig cfg;
    cfg.window = 2 + rng.below(7);
    cfg.variates = 2 + rng.below(7);
    cfg.rounds = 1 + rng.below(3);
    cfg.gru_hidden = 4;
    cfg.tie_qk = true;
    cfg.seed = rng.next_u64();
    MixerParams params = init_params(cfg);
    Tensor x = to_tensor(random_mat(rng, cfg.window, cfg.variates, -2.0, 2.0));
    MixerOutput out = mixer_forward(x, params, cfg, true);
    for (const auto& round : out.record.rounds) {
      for (const Tensor* logits : {&round.spatial_logits, &round.temporal_logits}) {
        for (int i = 0; i < logits->rows(); ++i)
          for (int j = 0; j < logits->cols(); ++j)
            worst = std::max(worst, std::fabs((*logits)(i, j) - (*logits)(j, i)));
      }
    }
  }
  report(4, worst < 1e-9,
         "tied-QK symmetry: max |logits - logits^T| = " + std::to_string(worst));
}

// ---- training-backed criteria (5, 6, 7) share these helpers

struct TrainedModel {
  MixerConfig config;
  TrainResult result;
  double entropy_s1 = 0.0;     // mean over test samples of round-1 M_S row entropy
  double gini_s1 = 0.0;        // same averaging for the Gini coefficient
  double edge_ratio = 0.0;     // averaged-attention true-edge mass ratio
};

TrainedModel run_training(const SeriesFrame& frame, const GroundTruthGraph& graph,
                          double lambda, bool disable_samp, std::uint64_t seed) {
  MixerConfig cfg;
  cfg.window = 16;
  cfg.variates = frame.variates();
  cfg.rounds = 2;
  cfg.gru_hidden = 32;
  cfg.smpr_mode = SmprMode::kEntropy;
  cfg.lambda = lambda;
  cfg.disable_samp = disable_samp;
  cfg.seed = seed;
  TrainOptions options;  // paper-default epochs/batch/lr/patience, H = 1

  TrainedModel tm;
  tm.config = cfg;
  tm.result = train(cfg, options, frame);

  if (!disable_samp) {
    auto scaled = std::make_shared<SeriesFrame>(tm.result.scaler.apply(frame));
    auto splits = chrono_split(make_windows(scaled, cfg.window, options.horizon));
    double entropy_sum = 0.0, gini_sum = 0.0;
    for (int i = 0; i < splits.test.size(); ++i) {
      MixerOutput out = mixer_forward(splits.test.input(i), tm.result.params, cfg, true);
      SparsityStats stats = attention_stats(out.record);
      entropy_sum += stats.spatial[0].mean_row_entropy;
      gini_sum += stats.spatial[0].gini;
    }
    tm.entropy_s1 = entropy_sum / splits.test.size();
    tm.gini_s1 = gini_sum / splits.test.size();
    AttentionRecord avg = average_attention(splits.test, tm.result.params, cfg);
    auto stats = attention_stats(avg, &graph);
    tm.edge_ratio = stats.true_edge_mass_ratio.value_or(0.0);
  }
  return tm;
}

double ar_baseline_r2(const SeriesFrame& frame, const Scaler& scaler, int order) {
  SeriesFrame scaled = scaler.apply(frame);
  auto splits = chrono_split(make_windows(scaled, 16, 1));
  const int last_train_row = splits.train.starts.back() + 16;  // includes the H=1 target
  std::vector<double> train_kpi(scaled.kpi.begin(), scaled.kpi.begin() + last_train_row + 1);
  ArModel model = ArModel::fit(train_kpi, order, 1);
  std::vector<double> actual, predicted;
  for (int i = 0; i < splits.test.size(); ++i) {
    const int origin = splits.test.starts[i] + 16 - 1;
    std::span<const double> history(scaled.kpi.data(), origin + 1);
    predicted.push_back(model.predict(history));
    actual.push_back(splits.test.target(i));
  }
  Metrics m = compute_metrics(actual, predicted);
  return m.r2.value_or(-1.0);
}

// Spearman rank correlation for three (x, y) points.
double rank_corr3(const std::vector<double>& x, const std::vector<double>& y) {
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (size_t i = 0; i < v.size(); ++i)
      for (size_t j = 0; j < v.size(); ++j)
        if (v[j] < v[i]) r[i] += 1.0;
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double mean = 1.0;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (size_t i = 0; i < 3; ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  return num / std::sqrt(dx * dy);
}

void training_criteria() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec = SynthSpec::g1();
  const SynthResult synth = gen_synthetic(spec, 0);
  const SeriesFrame& frame = synth.frame;
  const GroundTruthGraph& graph = synth.graph;

  // 13 configurations: full/no-SAMP at the default penalty plus the
  // lambda sweep {0, 1e-2} for the sparsification test, seeds 0..2.
  struct Job {
    double lambda;
    bool disable_samp;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    jobs.push_back({1e-3, false, seed});  // full (seed 0 doubles as criterion 5)
    jobs.push_back({1e-3, true, seed});   // w/o SAMP
    jobs.push_back({0.0, false, seed});
    jobs.push_back({1e-2, false, seed});
  }

  std::vector<TrainedModel> models(jobs.size());
  const unsigned workers = std::max(2u, std::thread::hardware_concurrency());
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
        models[i] = run_training(frame, graph, jobs[i].lambda, jobs[i].disable_samp,
                                 jobs[i].seed);
      }
    });
  }
  for (auto& t : pool) t.join();

  const auto find = [&](double lambda, bool disable_samp, std::uint64_t seed) -> TrainedModel& {
    for (size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].lambda == lambda && jobs[i].disable_samp == disable_samp &&
          jobs[i].seed == seed) {
        return models[i];
      }
    }
    throw std::logic_error("job not found");
  };

  // criterion 5: forecasting quality on G1 versus the AR(2) baseline.
  {
    TrainedModel& seed0 = find(1e-3, false, 0);
    const double mixer_r2 = seed0.result.report.test_metrics.r2.value_or(-1.0);
    const double ar_r2 = ar_baseline_r2(frame, seed0.result.scaler, 2);
    const double secs = seed0.result.report.wall_seconds;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "synthetic forecasting: mixer R2 %.4f (>= 0.8), AR(2) R2 %.4f, margin "
                  "%.4f (>= 0.02), train wall %.1f s (< 300)",
                  mixer_r2, ar_r2, mixer_r2 - ar_r2, secs);
    report(5, mixer_r2 >= 0.8 && mixer_r2 - ar_r2 >= 0.02 && secs < 300.0, buf);
  }

  // criterion 6: removing the spatial block does not help (direction only).
  {
    double full_mean = 0.0, nosamp_mean = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      full_mean += find(1e-3, false, seed).result.report.test_metrics.r2.value_or(-1.0);
      nosamp_mean += find(1e-3, true, seed).result.report.test_metrics.r2.value_or(-1.0);
    }
    full_mean /= 3.0;
    nosamp_mean /= 3.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "ablation direction: mean test R2 full %.4f >= w/o-SAMP %.4f (3 seeds)",
                  full_mean, nosamp_mean);
    report(6, full_mean >= nosamp_mean, buf);
  }

  // criterion 7: the entropy penalty sparsifies round-1 spatial attention.
  {
    double with_penalty = 0.0, without = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      with_penalty += find(1e-2, false, seed).entropy_s1;
      without += find(0.0, false, seed).entropy_s1;
    }
    with_penalty /= 3.0;
    without /= 3.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "sparsification: mean round-1 M_S entropy %.4f (lambda=0.01) vs %.4f "
                  "(lambda=0), reduction %.1f%% (>= 10%%)",
                  with_penalty, without, 100.0 * (1.0 - with_penalty / without));
    report(7, with_penalty <= 0.9 * without, buf);
  }

  // Supplementary properties piggybacking on the same models (not numbered
  // acceptance criteria, still enforced).
  {
    double ratio_mean = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      ratio_mean += find(1e-2, false, seed).edge_ratio;
    }
    ratio_mean /= 3.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "true-edge attention ratio: mean %.3f over 3 seeds (> 1 means "
                  "above-chance mass on real dependencies)",
                  ratio_mean);
    report_property(ratio_mean > 1.0, buf);

    double corr_mean = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::vector<double> entropies, ginis;
      for (double lambda : {0.0, 1e-3, 1e-2}) {
        entropies.push_back(find(lambda, false, seed).entropy_s1);
        ginis.push_back(find(lambda, false, seed).gini_s1);
      }
      corr_mean += rank_corr3(entropies, ginis);
    }
    corr_mean /= 3.0;
    std::snprintf(buf, sizeof(buf),
                  "entropy/Gini move oppositely across lambda: mean rank correlation %.3f",
                  corr_mean);
    report_property(corr_mean < 0.0, buf);
  }

  std::printf("  (training block: %.1f s for %zu trainings)\n", seconds_since(t0),
              jobs.size());
}

// ---- criterion 8: FLOP accounting

void criterion_flops() {
  Rng rng(800);
  bool exact = true;
  for (int rep = 0; rep < 5; ++rep) {
    MixerConfig cfg;
    cfg.window = 2 + rng.below(8);
    cfg.variates = 2 + rng.below(8);
    cfg.rounds = 1 + rng.below(3);
    cfg.gru_hidden = 1 + rng.below(16);
    cfg.seed = rng.next_u64();
    MixerParams params = init_params(cfg);
    Tensor x = to_tensor(random_mat(rng, cfg.window, cfg.variates));
    reset_flop_count();
    mixer_forward(x, params, cfg, false);
    exact = exact && (flop_count() == count_flops(cfg).total);
  }

  // Dominant-term scaling, asserted algebraically on the closed form via
  // constant second differences: d^2/dD^2 of the SAMP count is 8*T*K
  // (so the D^2 coefficient is 4*T*K), and d^2/dT^2 of TAMP is 8*D*K.
  bool scaling = true;
  for (int rounds : {1, 2}) {
    for (int fixed = 3; fixed <= 17; fixed += 7) {
      for (int v = 2; v <= 20; ++v) {
        MixerConfig a, b, c;
        a.rounds = b.rounds = c.rounds = rounds;
        a.window = b.window = c.window = fixed;
        a.variates = v;
        b.variates = v + 1;
        c.variates = v + 2;
        const long long dd = static_cast<long long>(count_flops(c).samp) -
                             2LL * count_flops(b).samp + count_flops(a).samp;
        scaling = scaling && dd == 8LL * fixed * rounds;

        MixerConfig d, e, f;
        d.rounds = e.rounds = f.rounds = rounds;
        d.variates = e.variates = f.variates = fixed;
        d.window = v;
        e.window = v + 1;
        f.window = v + 2;
        const long long dt = static_cast<long long>(count_flops(f).tamp) -
                             2LL * count_flops(e).tamp + count_flops(d).tamp;
        scaling = scaling && dt == 8LL * fixed * rounds;
      }
    }
  }
  report(8, exact && scaling,
         std::string("FLOP counter: instrumented == closed form on 5 random configs (") +
             (exact ? "yes" : "no") + "), quadratic dominant terms in D (SAMP) and T "
             "(TAMP) verified algebraically (" + (scaling ? "yes" : "no") + ")");
}

// ---- criterion 9: metric formulas

void criterion_metrics() {
  const std::vector<double> y = {0.3, -1.2, 2.4, 0.9};
  Metrics perfect = compute_metrics(y, y);
  bool ok = perfect.r2.has_value() && *perfect.r2 == 1.0 && perfect.rmse == 0.0 &&
            perfect.mae == 0.0;

  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  Metrics against_mean = compute_metrics(y, std::vector<double>(y.size(), mean));
  ok = ok && against_mean.r2.has_value() && std::fabs(*against_mean.r2) < 1e-15;

  Metrics hand = compute_metrics({0, 1, 2}, {0, 1, 1});
  ok = ok && hand.r2.has_value() && *hand.r2 == 0.5 && hand.mae == 1.0 / 3.0 &&
       hand.rmse == std::sqrt(1.0 / 3.0);
  report(9, ok,
         "metrics suite: perfect fit R2=1, mean predictor R2=0, three-point example "
         "(mae=1/3, rmse=sqrt(1/3), r2=0.5) reproduced exactly");
}

// ---- criterion 10: what this suite does NOT reproduce

void criterion_non_reproducibility() {
  report(10, true,
         "non-reproducibility statement: published reference accuracies on the ANRMN "
         "station logs (e.g. Beijing H=1 R2 0.9756) require proprietary data that is "
         "not distributed; criteria 1-9 are the substituted property-based checks on "
         "synthetic data");
}

}  // namespace

int main() {
  criterion_gradient_fidelity();
  criterion_literal_constancy();
  criterion_block_oracles();
  criterion_symmetry();
  training_criteria();
  criterion_flops();
  criterion_metrics();
  criterion_non_reproducibility();
  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
