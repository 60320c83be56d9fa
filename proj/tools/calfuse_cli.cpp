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

// Command-line front end. Everything goes through the C API in libcalfuse.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "calfuse/calfuse.h"

namespace fs = std::filesystem;

namespace {

// Carries a status from a failed C call up to main.
struct Failure {
  cf_status status;
  std::string message;
};

void check(cf_status s) {
  if (s != CF_OK) throw Failure{s, cf_last_error()};
}

std::string take(char* s) {
  std::string out(s ? s : "");
  cf_string_free(s);
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  f << content;
  if (!f) throw Failure{CF_ERR_RUNTIME, "cannot write " + path.string()};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  ~Handle() { Free(ptr); }
};

using Corpus = Handle<cf_corpus, cf_corpus_free>;
using Dictionary = Handle<cf_dictionary, cf_dictionary_free>;
using Predictions = Handle<cf_predictions, cf_predictions_free>;
using Experiment = Handle<cf_experiment, cf_experiment_free>;

struct ExperimentFlags {
  std::string config;
  std::string corpus;
  std::string feature_set;
  std::string dict;
  std::string features;
  std::string topics;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<int> bins;
  std::optional<int> ranges;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f) {
  cmd->add_option("--config", f.config, "experiment config JSON");
  cmd->add_option("--corpus", f.corpus, "corpus CSV (overrides config)");
  cmd->add_option("--feature-set", f.feature_set, "lexicon|dictionary|goss|dense|none");
  cmd->add_option("--dict", f.dict, "category dictionary (TSV)");
  cmd->add_option("--features", f.features, "dense feature CSV");
  cmd->add_option("--topics", f.topics, "topic matrix CSV for goss");
  cmd->add_option("--seed", f.seed, "split and training seed");
  cmd->add_option("--alpha", f.alpha, "label smoothing alpha");
  cmd->add_option("--beta", f.beta, "fusion beta");
  cmd->add_option("--bins", f.bins, "ECE bins M");
  cmd->add_option("--ranges", f.ranges, "ACE ranges R");
  cmd->add_option("--out", f.out, "output directory");
}

int run_experiment(const ExperimentFlags& f, bool crossval) {
  Experiment e;
  if (!f.config.empty())
    check(cf_experiment_load_config(f.config.c_str(), &e.ptr));
  else
    check(cf_experiment_create(&e.ptr));
  if (!f.corpus.empty()) check(cf_experiment_set_corpus(e.ptr, f.corpus.c_str()));
  if (!f.feature_set.empty()) check(cf_experiment_set_feature_set(e.ptr, f.feature_set.c_str()));
  if (!f.dict.empty()) check(cf_experiment_set_dict(e.ptr, f.dict.c_str()));
  if (!f.features.empty()) check(cf_experiment_set_features(e.ptr, f.features.c_str()));
  if (!f.topics.empty()) check(cf_experiment_set_topics(e.ptr, f.topics.c_str()));
  if (f.seed) check(cf_experiment_set_seed(e.ptr, *f.seed));
  if (f.alpha) check(cf_experiment_set_alpha(e.ptr, *f.alpha));
  if (f.beta) check(cf_experiment_set_beta(e.ptr, *f.beta));
  if (f.bins) check(cf_experiment_set_bins(e.ptr, *f.bins));
  if (f.ranges) check(cf_experiment_set_ranges(e.ptr, *f.ranges));
  if (!f.out.empty()) check(cf_experiment_set_out_dir(e.ptr, f.out.c_str()));

  char* mode = nullptr;
  check(cf_experiment_get_split_mode(e.ptr, &mode));
  const bool kfold = take(mode) == "stratified-5-fold";
  if (crossval && !kfold) check(cf_experiment_set_split_mode(e.ptr, "stratified-5-fold"));
  if (!crossval && kfold) check(cf_experiment_set_split_mode(e.ptr, "holdout-80-20"));

  check(cf_experiment_run(e.ptr, utc_timestamp().c_str()));
  char* s = nullptr;
  check(cf_experiment_report_json(e.ptr, &s));
  const std::string report = take(s);

  check(cf_experiment_get_out_dir(e.ptr, &s));
  const fs::path out = take(s);
  if (out.empty()) {
    std::cout << report << '\n';
    return 0;
  }
  write_file(out / "report.json", report + "\n");
  check(cf_experiment_predictions_csv(e.ptr, &s));
  write_file(out / "predictions.csv", take(s));
  const std::size_t folds = cf_experiment_fold_count(e.ptr);
  for (std::size_t k = 0; k < folds; ++k) {
    check(cf_experiment_model_json(e.ptr, k, &s));
    const std::string name =
        folds == 1 ? "model.json" : "model_fold" + std::to_string(k) + ".json";
    write_file(out / name, take(s) + "\n");
  }
  std::cout << "wrote " << (out / "report.json").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calfuse: feature fusion, label smoothing and calibration toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cf_version());

  // features
  std::string f_corpus, f_set = "dictionary", f_dict, f_features, f_topics, f_out;
  auto* features = app.add_subcommand("features", "extract per-text feature vectors to CSV");
  features->add_option("--corpus", f_corpus, "corpus CSV")->required();
  features->add_option("--feature-set", f_set, "lexicon|dictionary|goss|dense|none");
  features->add_option("--dict", f_dict, "category dictionary (TSV)");
  features->add_option("--features", f_features, "dense feature CSV");
  features->add_option("--topics", f_topics, "topic matrix CSV");
  features->add_option("--out", f_out, "output directory (stdout if omitted)");

  // train / crossval
  ExperimentFlags train_flags, cv_flags;
  auto* train = app.add_subcommand("train", "train and evaluate on a single split");
  add_experiment_flags(train, train_flags);
  auto* crossval = app.add_subcommand("crossval", "stratified 5-fold cross-validation");
  add_experiment_flags(crossval, cv_flags);

  // calibrate
  std::string c_preds, c_out;
  int c_bins = 10, c_ranges = 10;
  auto* calibrate = app.add_subcommand("calibrate", "ECE/ACE from a prediction CSV");
  calibrate->add_option("predictions", c_preds, "CSV with header id,true_label,p0..")
      ->required();
  calibrate->add_option("--bins", c_bins, "ECE bins M");
  calibrate->add_option("--ranges", c_ranges, "ACE ranges R");
  calibrate->add_option("--out", c_out, "output directory for reliability.csv");

  // analyze
  std::string a_corpus, a_dict, a_out;
  double a_q = 0.05;
  auto* analyze = app.add_subcommand("analyze", "point-biserial correlations with BH control");
  analyze->add_option("--corpus", a_corpus, "binary corpus CSV")->required();
  analyze->add_option("--dict", a_dict, "category dictionary (TSV)")->required();
  analyze->add_option("--q", a_q, "false discovery rate");
  analyze->add_option("--out", a_out, "output directory (stdout if omitted)");

  // gradcheck
  std::string g_op = "all";
  std::uint64_t g_seed = 0;
  int g_instances = 100;
  double g_step = 1e-5, g_tol = 1e-5;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--op", g_op, "fusion|smoothed_ce|toy_model|all");
  gradcheck->add_option("--seed", g_seed, "first seed");
  gradcheck->add_option("--instances", g_instances, "random instances per op");
  gradcheck->add_option("--step", g_step, "central difference step");
  gradcheck->add_option("--tol", g_tol, "max relative error");

  // synth
  std::string s_out;
  std::size_t s_samples = 1000;
  int s_classes = 2;
  double s_noise = 0.05;
  std::uint64_t s_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic feature-informative corpus");
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--samples", s_samples, "number of texts");
  synth->add_option("--classes", s_classes, "number of classes");
  synth->add_option("--noise", s_noise, "label noise probability");
  synth->add_option("--seed", s_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*features) {
      Corpus corpus;
      check(cf_corpus_load(f_corpus.c_str(), &corpus.ptr));
      char* csv = nullptr;
      check(cf_features_extract(corpus.ptr, f_set.c_str(), f_dict.c_str(), f_topics.c_str(),
                                f_features.c_str(), &csv));
      if (f_out.empty())
        std::cout << take(csv);
      else
        write_file(fs::path(f_out) / "features.csv", take(csv));
      return 0;
    }
    if (*train) return run_experiment(train_flags, false);
    if (*crossval) return run_experiment(cv_flags, true);
    if (*calibrate) {
      Predictions p;
      check(cf_predictions_load(c_preds.c_str(), &p.ptr));
      char* s = nullptr;
      check(cf_calibration_summary(p.ptr, c_bins, c_ranges, &s));
      std::cout << take(s) << '\n';
      if (!c_out.empty()) {
        check(cf_reliability_csv(p.ptr, c_bins, &s));
        write_file(fs::path(c_out) / "reliability.csv", take(s));
      }
      return 0;
    }
    if (*analyze) {
      Corpus corpus;
      Dictionary dict;
      check(cf_corpus_load(a_corpus.c_str(), &corpus.ptr));
      check(cf_dictionary_load(a_dict.c_str(), &dict.ptr));
      char* csv = nullptr;
      check(cf_linguistic_analysis(corpus.ptr, dict.ptr, a_q, &csv));
      if (a_out.empty())
        std::cout << take(csv);
      else
        write_file(fs::path(a_out) / "correlations.csv", take(csv));
      return 0;
    }
    if (*gradcheck) {
      if (g_instances < 1) throw Failure{CF_ERR_VALIDATION, "--instances must be positive"};
      if (g_op != "all" && g_op != "fusion" && g_op != "smoothed_ce" && g_op != "toy_model")
        throw Failure{CF_ERR_VALIDATION, "unknown op '" + g_op + "'"};
      const char* ops[] = {"fusion", "smoothed_ce", "toy_model"};
      bool all_pass = true;
      for (const char* op : ops) {
        if (g_op != "all" && g_op != op) continue;
        double worst = 0.0;
        int failed = 0;
        for (int i = 0; i < g_instances; ++i) {
          double err = 0.0;
          int pass = 0;
          check(cf_gradcheck(op, g_seed + static_cast<std::uint64_t>(i), g_step, g_tol, &err,
                             &pass));
          worst = std::max(worst, err);
          failed += pass ? 0 : 1;
        }
        std::printf("%-12s instances=%d max_rel_error=%.3e failed=%d %s\n", op, g_instances,
                    worst, failed, failed ? "FAIL" : "PASS");
        all_pass = all_pass && failed == 0;
      }
      return all_pass ? 0 : 2;
    }
    if (*synth) {
      const fs::path out(s_out);
      std::error_code ec;
      fs::create_directories(out, ec);
      check(cf_synthetic_write(s_samples, s_classes, s_noise, s_seed,
                               (out / "corpus.csv").string().c_str(),
                               (out / "features.csv").string().c_str()));
      std::cout << "wrote " << (out / "corpus.csv").string() << " and "
                << (out / "features.csv").string() << '\n';
      return 0;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return static_cast<int>(f.status);
  }
  return 0;
}
