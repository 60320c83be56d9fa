// Copyright (c) 2026 The calfuse Authors. All Rights Reserved.
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

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "calfuse/analysis.hpp"
#include "calfuse/calibration.hpp"
#include "calfuse/csv.hpp"
#include "calfuse/features.hpp"
#include "calfuse/gradcheck.hpp"
#include "calfuse/model.hpp"
#include "calfuse/pipeline.hpp"
#include "calfuse/random.hpp"
#include "calfuse/text.hpp"
#include "oracles.hpp"

#ifndef CALFUSE_CLI_PATH
#error "CALFUSE_CLI_PATH must name the calfuse executable"
#endif

namespace calfuse {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Outcome {
  bool pass;
  std::string detail;
};

Outcome a1_fusion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int failed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_fusion_instance(seed, 4, 3, 5, false);
    const auto r = check_fusion_gradients(inst, 1e-5, 1e-5);
    worst = std::max(worst, r.max_rel_error);
    failed += r.pass ? 0 : 1;
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "100 instances, max rel err %.2e (< 1e-5), %d failed, %.2f s (< 10 s)",
                worst, failed, secs);
  return {failed == 0 && worst < 1e-5 && secs < 10.0, buf};
}

Outcome a2_loss_gradient() {
  Rng rng(2002);
  double identity = 0.0, fd_worst = 0.0;
  for (int K : {2, 4}) {
    for (double alpha : {0.0, 0.001, 0.1}) {
      const SmoothingConfig cfg{alpha, K};
      for (int t = 0; t < 200; ++t) {
        Vector z(K);
        for (Index j = 0; j < K; ++j) z(j) = 3 * rng.normal();
        const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(K)));
        const auto r = smoothed_cross_entropy_logits(z, y, cfg);
        const Vector expect = softmax(z) - smooth_targets(y, cfg);
        identity = std::max(identity, (r.d_logits - expect).cwiseAbs().maxCoeff());
        const double h = 1e-5;
        for (Index j = 0; j < K; ++j) {
          Vector up = z, down = z;
          up(j) += h;
          down(j) -= h;
          const double fd = (smoothed_cross_entropy_logits(up, y, cfg).loss -
                             smoothed_cross_entropy_logits(down, y, cfg).loss) /
                            (2 * h);
          fd_worst = std::max(fd_worst, std::abs(fd - r.d_logits(j)));
        }
      }
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "|grad - (p - y_ls)| max %.1e, |grad - FD| max %.2e (< 1e-6), alpha {0,0.001,0.1} x K {2,4}",
                identity, fd_worst);
  return {identity < 1e-12 && fd_worst < 1e-6, buf};
}

Outcome a3_calibration_oracles() {
  Rng rng(3003);
  double ece_diff = 0.0, ace_diff = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int R = 1 + static_cast<int>(rng.below(10));
    const int M = 1 + static_cast<int>(rng.below(10));
    const std::size_t n = static_cast<std::size_t>(R) + rng.below(51 - static_cast<std::uint64_t>(R));
    const int K = 2 + static_cast<int>(rng.below(4));
    const auto p = oracle::random_predictions(rng, n, K, t % 2 == 0);
    CalibrationConfig cfg;
    cfg.bins = M;
    cfg.ranges = R;
    ece_diff = std::max(ece_diff, std::abs(ece(p, cfg).ece - oracle::ece(p.probs(), p.true_labels(), M)));
    ace_diff = std::max(ace_diff, std::abs(ace(p, cfg).ace - oracle::ace(p.probs(), p.true_labels(), R)));
  }
  CalibrationConfig two;
  two.bins = 2;
  // Confidences 0.9, 0.8, 0.3 with correctness true, true, false.
  Matrix h3(3, 4);
  h3 << 0.9, 0.1, 0, 0, 0.8, 0.2, 0, 0, 0.3, 0.25, 0.25, 0.2;
  const double hand_ece = ece(PredictionSet(h3, {0, 0, 1}), two).ece;
  const double ulps = std::abs(hand_ece - 0.2) / (std::nextafter(0.2, 1.0) - 0.2);
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "1000 sets: max |ECE - oracle| %.1e, max |ACE - oracle| %.1e (< 1e-12); hand ECE %.17g (%.0f ulp from 0.2)",
                ece_diff, ace_diff, hand_ece, ulps);
  return {ece_diff < 1e-12 && ace_diff < 1e-12 && ulps <= 4, buf};
}

Outcome a4_goss() {
  Rng rng(4004);
  double moment = 0.0, invariance = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index n = 2 + static_cast<Index>(rng.below(40));
    const Index k = 2 + static_cast<Index>(rng.below(25));
    Matrix x(n, k);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < k; ++j) x(i, j) = rng.uniform() + 1e-3;
      x.row(i) /= x.row(i).sum();
    }
    const Matrix g = goss(TopicMatrix(x));
    for (Index j = 0; j < k; ++j) {
      moment = std::max(moment, std::abs(g.col(j).mean()));
      moment = std::max(moment, std::abs(g.col(j).norm() - 1.0));
    }
    Matrix y = x;
    for (Index j = 0; j < k; ++j)
      y.col(j) = y.col(j).array() * (0.01 + 10 * rng.uniform()) + 20 * (rng.uniform() - 0.5);
    invariance = std::max(invariance, (goss_columns(y) - g).cwiseAbs().maxCoeff());
  }
  Matrix hand(3, 2);
  hand << 0.1, 0.9, 0.2, 0.8, 0.3, 0.7;
  const Matrix hg = goss(TopicMatrix(hand));
  const double s = 1 / std::sqrt(2.0);
  const double hand_err = std::max({std::abs(hg(0, 0) + s), std::abs(hg(1, 0)), std::abs(hg(2, 0) - s)});
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "100 matrices: mean/norm dev %.1e, location-scale dev %.1e (< 1e-9); hand example err %.1e (< 1e-12)",
                moment, invariance, hand_err);
  return {moment < 1e-9 && invariance < 1e-9 && hand_err < 1e-12, buf};
}

struct SyntheticRun {
  double accuracy;
  double ece;
  double class1_prob;  // median p(1) over held-out texts whose features encode class 1
};

SyntheticRun run_synthetic(std::uint64_t seed, double noise, double beta, int epochs,
                           SelectionMode selection, double alpha, bool zero_features) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.label_noise = noise;
  const auto data = make_synthetic(spec);
  SplitPlan plan;
  plan.mode = SplitMode::Holdout;
  plan.seed = seed;
  const auto part = stratified_split(data.corpus, plan)[0];
  ModelDims dims;
  dims.feature_raw_dim = spec.feature_dim;
  dims.beta = beta;
  auto samples = [&](const std::vector<std::size_t>& idx) {
    std::vector<Sample> out;
    for (auto i : idx) {
      Vector f = data.features.values.row(static_cast<Index>(i)).transpose();
      if (zero_features) f.setZero();
      out.push_back({token_ids(data.corpus.records[i].text, dims.vocab_size), f,
                     data.corpus.records[i].label});
    }
    return out;
  };
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.max_epochs = epochs;
  cfg.selection = selection;
  const auto trained = train(samples(part.train), samples(part.val), dims, cfg, {alpha, 2});
  const auto test = samples(part.test);
  const Matrix probs = predict(trained.params, test);
  std::vector<int> labels;
  for (const auto& s : test) labels.push_back(s.label);
  const PredictionSet preds(probs, labels);
  std::size_t correct = 0;
  std::vector<double> p1;
  for (std::size_t i = 0; i < test.size(); ++i) {
    correct += preds.correct(i) ? 1 : 0;
    if (data.clean_labels[part.test[i]] == 1) p1.push_back(probs(static_cast<Index>(i), 1));
  }
  return {static_cast<double>(correct) / static_cast<double>(test.size()), ece(preds, {}).ece,
          median(p1)};
}

Outcome a5_fusion_efficacy() {
  const auto t0 = Clock::now();
  std::vector<double> fused, zeroed, p1;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = run_synthetic(seed, 0.05, 1.0, 10, SelectionMode::BestValLoss, 0.001, false);
    fused.push_back(f.accuracy);
    p1.push_back(f.class1_prob);
    zeroed.push_back(
        run_synthetic(seed, 0.05, 1.0, 10, SelectionMode::BestValLoss, 0.001, true).accuracy);
  }
  const double secs = seconds_since(t0);
  char buf[220];
  std::snprintf(buf, sizeof buf,
                "median held-out acc fused %.3f (>= 0.90), feature path zeroed %.3f (<= 0.60); beta 1.0; median p(class 1 | class-1 features) %.3f; %.1f s (< 120 s)",
                median(fused), median(zeroed), median(p1), secs);
  return {median(fused) >= 0.90 && median(zeroed) <= 0.60 && secs < 120.0, buf};
}

Outcome a6_smoothing_calibration() {
  std::vector<double> smoothed, plain;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    plain.push_back(run_synthetic(seed, 0.3, 1.0, 30, SelectionMode::FinalEpoch, 0.0, false).ece);
    smoothed.push_back(
        run_synthetic(seed, 0.3, 1.0, 30, SelectionMode::FinalEpoch, 0.1, false).ece);
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "30%% label noise, 30 epochs, final epoch: median test ECE alpha=0.1 %.4f < alpha=0 %.4f",
                median(smoothed), median(plain));
  return {median(smoothed) < median(plain), buf};
}

Outcome a7_statistics() {
  Rng rng(7007);
  double pb = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 3 + rng.below(100);
    std::vector<double> v(n), y(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
      y[i] = labels[i];
      v[i] = rng.normal() * (1 + 5 * rng.uniform()) + labels[i];
    }
    pb = std::max(pb, std::abs(point_biserial(v, labels).r - oracle::pearson(v, y)));
  }
  int bh_mismatch = 0;
  const int bh_trials = 20000;
  for (int t = 0; t < bh_trials; ++t) {
    const std::size_t m = 1 + rng.below(12);
    std::vector<double> p(m);
    for (auto& x : p) x = t % 2 ? rng.uniform() * 0.3 : static_cast<double>(rng.below(30)) / 200.0;
    const double q = 0.01 + 0.99 * rng.uniform();
    bh_mismatch += benjamini_hochberg(p, q) != oracle::benjamini_hochberg(p, q);
  }
  const double hand_r = point_biserial({1, 2, 3, 4}, {0, 0, 1, 1}).r;
  const auto hand_bh = benjamini_hochberg({0.01, 0.02, 0.04}, 0.05);
  const bool hand_ok = std::abs(hand_r - 0.894427) < 5e-7 &&
                       hand_bh == std::vector<bool>{true, true, true};
  char buf[220];
  std::snprintf(buf, sizeof buf,
                "r_pb vs Pearson max diff %.1e (< 1e-12, 1000 cases); BH vs brute force %d/%d mismatches (m <= 12); hand r %.6f, BH hand %s",
                pb, bh_mismatch, bh_trials, hand_r, hand_ok ? "ok" : "wrong");
  return {pb < 1e-12 && bh_mismatch == 0 && hand_ok, buf};
}

Outcome a8_protocol() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.step_size = 5;
  cfg.gamma = 0.1;
  bool lr_ok = true;
  for (int e = 1; e <= 50; ++e)
    lr_ok = lr_ok && learning_rate_at(cfg, e) == 1e-3 * std::pow(0.1, (e - 1) / 5);
  lr_ok = lr_ok && std::abs(learning_rate_at(cfg, 11) - 1e-5) < 1e-20;

  int worst_dev = 0;
  double worst_frac = 0.0;
  Rng rng(8008);
  for (int t = 0; t < 200; ++t) {
    const int K = 2 + static_cast<int>(rng.below(3));
    std::vector<int> labels;
    std::vector<std::size_t> counts(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      counts[static_cast<std::size_t>(k)] = 5 + rng.below(80);
      for (std::size_t j = 0; j < counts[static_cast<std::size_t>(k)]; ++j) labels.push_back(k);
    }
    rng.shuffle(labels.begin(), labels.end());
    const auto fold = stratified_folds(labels, K, 5, rng.next());
    for (int k = 0; k < K; ++k)
      for (int f = 0; f < 5; ++f) {
        double n = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) n += labels[i] == k && fold[i] == f;
        const double dev = std::abs(n - static_cast<double>(counts[static_cast<std::size_t>(k)]) / 5);
        worst_frac = std::max(worst_frac, dev);
        worst_dev = std::max(worst_dev, static_cast<int>(std::ceil(dev - 1e-12)));
      }
  }

  bool select_ok = true;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> v(1 + rng.below(30));
    for (auto& x : v) x = static_cast<double>(rng.below(6)) + (t % 2 ? rng.uniform() : 0.0);
    select_ok = select_ok &&
                select_checkpoint(v) == std::min_element(v.begin(), v.end()) - v.begin() + 1;
  }
  ModelDims dims;
  dims.vocab_size = 256;
  dims.dim = 8;
  dims.feature_proj_dim = 8;
  dims.hidden_dim = 8;
  dims.feature_raw_dim = 2;
  std::vector<Sample> tr, va;
  for (int i = 0; i < 40; ++i) {
    Sample s{{1 + rng.below(255), 1 + rng.below(255)}, Vector::Constant(2, i % 2 ? 1.0 : -1.0), i % 2};
    (i < 32 ? tr : va).push_back(s);
  }
  TrainConfig tc = cfg;
  tc.learning_rate = 1e-2;
  tc.max_epochs = 15;
  const auto run = train(tr, va, dims, tc, {0.001, 2});
  std::vector<double> losses;
  for (const auto& h : run.history) losses.push_back(h.val_loss);
  select_ok = select_ok && run.selected_epoch == select_checkpoint(losses) &&
              evaluate_loss(run.params, va, {0.001, 2}) ==
                  losses[static_cast<std::size_t>(run.selected_epoch - 1)];
  char buf[220];
  std::snprintf(buf, sizeof buf,
                "lr = lr0*0.1^floor((e-1)/5) exact for e=1..50: %s; 5-fold per-class deviation max %.2f (<= 1); checkpoint = argmin val loss: %s",
                lr_ok ? "yes" : "no", worst_frac, select_ok ? "yes" : "no");
  return {lr_ok && worst_dev <= 1 && select_ok, buf};
}

std::string strip_timestamp(const std::string& report) {
  std::string out;
  std::size_t start = 0;
  while (start < report.size()) {
    std::size_t end = report.find('\n', start);
    if (end == std::string::npos) end = report.size();
    const std::string line = report.substr(start, end - start);
    if (line.find("\"timestamp\":") == std::string::npos) out += line + "\n";
    start = end + 1;
  }
  return out;
}

Outcome a9_determinism() {
  const fs::path dir = fs::temp_directory_path() / "calfuse_acceptance_a9";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = CALFUSE_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > \"" + (dir / "log.txt").string() + "\" 2>&1";
    return std::system(cmd.c_str());
  };
  if (run("synth --samples 200 --seed 3 --out \"" + dir.string() + "\"") != 0)
    return {false, "synth failed"};
  write_text_file((dir / "config.json").string(),
                  R"({"corpus": "corpus.csv", "feature_set": "dense", "features": "features.csv",
  "fusion_beta": 1.0, "smoothing_alpha": 0.1,
  "train": {"max_epochs": 4, "seed": 11}, "split": {"mode": "stratified-5-fold", "seed": 11}}
)");
  const std::string cfg = (dir / "config.json").string();
  const std::string crossval = "crossval --config \"" + cfg + "\" --seed 42 --out \"" +
                               (dir / "out").string() + "\"";
  if (run(crossval) != 0)
    return {false, "first crossval failed: " + read_text_file((dir / "log.txt").string())};
  fs::rename(dir / "out", dir / "first");
  if (run(crossval) != 0) return {false, "second crossval failed"};
  auto same = [&](const char* name) {
    return read_text_file((dir / "first" / name).string()) ==
           read_text_file((dir / "out" / name).string());
  };
  const std::string ra = read_text_file((dir / "first" / "report.json").string());
  const std::string rb = read_text_file((dir / "out" / "report.json").string());
  const bool reports = strip_timestamp(ra) == strip_timestamp(rb);
  const bool has_ts = ra.find("\"timestamp\":") != std::string::npos;
  const bool preds = same("predictions.csv");
  const bool models = same("model_fold0.json") && same("model_fold4.json");
  fs::remove_all(dir);
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "two CLI crossval runs (seed 42): report identical modulo timestamp: %s; predictions.csv identical: %s; models identical: %s",
                reports ? "yes" : "no", preds ? "yes" : "no", models ? "yes" : "no");
  return {reports && has_ts && preds && models, buf};
}

}  // namespace
}  // namespace calfuse

int main() {
  using calfuse::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"A1 gradient correctness", calfuse::a1_fusion_gradients},
      {"A2 loss gradient", calfuse::a2_loss_gradient},
      {"A3 calibration oracles", calfuse::a3_calibration_oracles},
      {"A4 GOSS", calfuse::a4_goss},
      {"A5 fusion efficacy", calfuse::a5_fusion_efficacy},
      {"A6 label-smoothing calibration", calfuse::a6_smoothing_calibration},
      {"A7 statistics oracles", calfuse::a7_statistics},
      {"A8 protocol fidelity", calfuse::a8_protocol},
      {"A9 determinism", calfuse::a9_determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o{false, ""};
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %-32s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
