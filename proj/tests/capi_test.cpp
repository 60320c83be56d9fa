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

#include "calfuse/calfuse.h"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

std::string take(char* s) {
  std::string out(s ? s : "");
  cf_string_free(s);
  return out;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

class CApi : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("calfuse_capi_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const char* name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(CApi, VersionAndErrorReset) {
  EXPECT_STREQ(cf_version(), "0.1.0");
  cf_corpus* c = nullptr;
  EXPECT_EQ(cf_corpus_load(path("nope.csv").c_str(), &c), CF_ERR_VALIDATION);
  EXPECT_EQ(c, nullptr);
  EXPECT_NE(std::string(cf_last_error()), "");
  double ece = 0;
  const double probs[] = {0.9, 0.1};
  const int labels[] = {0};
  cf_predictions* p = nullptr;
  ASSERT_EQ(cf_predictions_create(probs, 1, 2, labels, &p), CF_OK);
  EXPECT_STREQ(cf_last_error(), "");
  EXPECT_EQ(cf_ece(p, 10, &ece), CF_OK);
  EXPECT_NEAR(ece, 0.1, 1e-15);
  cf_predictions_free(p);
}

TEST_F(CApi, NullArgumentsAreValidationErrors) {
  EXPECT_EQ(cf_corpus_load(nullptr, nullptr), CF_ERR_VALIDATION);
  EXPECT_EQ(cf_ece(nullptr, 10, nullptr), CF_ERR_VALIDATION);
  EXPECT_EQ(cf_experiment_run(nullptr, nullptr), CF_ERR_VALIDATION);
  EXPECT_EQ(cf_corpus_size(nullptr), 0u);
  cf_corpus_free(nullptr);
  cf_string_free(nullptr);
}

TEST_F(CApi, CalibrationHandExample) {
  const double probs[] = {0.9, 0.1, 0.8, 0.2, 0.7, 0.3};
  const int labels[] = {0, 0, 1};
  cf_predictions* p = nullptr;
  ASSERT_EQ(cf_predictions_create(probs, 3, 2, labels, &p), CF_OK);
  double e = 0, a = 0;
  ASSERT_EQ(cf_ece(p, 2, &e), CF_OK);
  EXPECT_NEAR(e, std::abs(2.0 / 3 - 0.8), 1e-15);
  EXPECT_EQ(cf_ace(p, 4, &a), CF_ERR_VALIDATION);
  ASSERT_EQ(cf_ace(p, 3, &a), CF_OK);
  char* s = nullptr;
  ASSERT_EQ(cf_reliability_csv(p, 2, &s), CF_OK);
  EXPECT_EQ(take(s).substr(0, 6), "bin_lo");
  ASSERT_EQ(cf_calibration_summary(p, 2, 3, &s), CF_OK);
  EXPECT_NE(take(s).find("\"ace\""), std::string::npos);
  EXPECT_EQ(cf_predictions_size(p), 3u);
  cf_predictions_free(p);
}

TEST_F(CApi, StatisticsAndLoss) {
  const double v[] = {1, 2, 3, 4};
  const int y[] = {0, 0, 1, 1};
  double r = 0, pv = 0;
  ASSERT_EQ(cf_point_biserial(v, y, 4, &r, &pv), CF_OK);
  EXPECT_NEAR(r, 0.894427191, 1e-9);
  const double constant[] = {2, 2, 2, 2};
  EXPECT_EQ(cf_point_biserial(constant, y, 4, &r, &pv), CF_ERR_VALIDATION);

  const double p[] = {0.01, 0.02, 0.04};
  int reject[3] = {0, 0, 0};
  ASSERT_EQ(cf_benjamini_hochberg(p, 3, 0.05, reject), CF_OK);
  EXPECT_EQ(reject[0] + reject[1] + reject[2], 3);

  const double z[] = {0.0, 0.0};
  double loss = 0, grad[2];
  ASSERT_EQ(cf_smoothed_cross_entropy(z, 2, 0, 0.0, &loss, grad), CF_OK);
  EXPECT_NEAR(loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(grad[0], -0.5, 1e-15);

  double err = 1;
  int pass = 0;
  ASSERT_EQ(cf_gradcheck("fusion", 3, 1e-5, 1e-5, &err, &pass), CF_OK);
  EXPECT_EQ(pass, 1);
  EXPECT_LT(err, 1e-5);
  EXPECT_EQ(cf_gradcheck("nope", 3, 1e-5, 1e-5, &err, &pass), CF_ERR_VALIDATION);

  const double topics[] = {0.1, 0.9, 0.2, 0.8, 0.3, 0.7};
  double g[6];
  ASSERT_EQ(cf_goss(topics, 3, 2, g), CF_OK);
  EXPECT_NEAR(g[0], -1 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(g[4], 1 / std::sqrt(2.0), 1e-12);
}

TEST_F(CApi, CorpusDictionaryFeaturesAnalysis) {
  write(dir_ / "c.csv",
        "id,text,label\na,sad day,1\nb,happy day,0\nc,sad sad,1\nd,happy,0\n");
  write(dir_ / "d.tsv", "neg\tsad\npos\thapp*\n");
  cf_corpus* c = nullptr;
  cf_dictionary* d = nullptr;
  ASSERT_EQ(cf_corpus_load(path("c.csv").c_str(), &c), CF_OK);
  ASSERT_EQ(cf_dictionary_load(path("d.tsv").c_str(), &d), CF_OK);
  EXPECT_EQ(cf_corpus_size(c), 4u);
  EXPECT_EQ(cf_corpus_num_classes(c), 2);
  EXPECT_EQ(cf_dictionary_size(d), 2u);
  char* s = nullptr;
  ASSERT_EQ(cf_features_extract(c, "dictionary", path("d.tsv").c_str(), nullptr, nullptr, &s),
            CF_OK);
  EXPECT_EQ(take(s), "id,f0,f1\na,0.5,0\nb,0,0.5\nc,1,0\nd,0,1\n");
  EXPECT_EQ(cf_features_extract(c, "bogus", nullptr, nullptr, nullptr, &s), CF_ERR_VALIDATION);
  ASSERT_EQ(cf_linguistic_analysis(c, d, 0.05, &s), CF_OK);
  const auto csv = take(s);
  EXPECT_NE(csv.find("positive-class,neg"), std::string::npos) << csv;
  cf_dictionary_free(d);
  cf_corpus_free(c);
}

TEST_F(CApi, ExperimentLifecycle) {
  ASSERT_EQ(cf_synthetic_write(60, 2, 0.05, 1, path("corpus.csv").c_str(),
                               path("features.csv").c_str()),
            CF_OK);
  cf_experiment* e = nullptr;
  ASSERT_EQ(cf_experiment_create(&e), CF_OK);
  char* s = nullptr;
  EXPECT_EQ(cf_experiment_report_json(e, &s), CF_ERR_VALIDATION);
  ASSERT_EQ(cf_experiment_set_corpus(e, path("corpus.csv").c_str()), CF_OK);
  ASSERT_EQ(cf_experiment_set_feature_set(e, "dense"), CF_OK);
  ASSERT_EQ(cf_experiment_set_features(e, path("features.csv").c_str()), CF_OK);
  ASSERT_EQ(cf_experiment_set_beta(e, 1.0), CF_OK);
  ASSERT_EQ(cf_experiment_set_seed(e, 17), CF_OK);
  ASSERT_EQ(cf_experiment_set_split_mode(e, "holdout-80-20"), CF_OK);
  EXPECT_EQ(cf_experiment_set_split_mode(e, "sometimes"), CF_ERR_VALIDATION);
  ASSERT_EQ(cf_experiment_config_json(e, &s), CF_OK);
  const auto cfg = take(s);
  EXPECT_NE(cfg.find("\"seed\": 17"), std::string::npos);
  ASSERT_EQ(cf_experiment_run(e, "now"), CF_OK);
  EXPECT_EQ(cf_experiment_fold_count(e), 1u);
  ASSERT_EQ(cf_experiment_report_json(e, &s), CF_OK);
  EXPECT_NE(take(s).find("\"timestamp\": \"now\""), std::string::npos);
  ASSERT_EQ(cf_experiment_predictions_csv(e, &s), CF_OK);
  EXPECT_EQ(take(s).substr(0, 21), "id,true_label,p0,p1\ns");
  ASSERT_EQ(cf_experiment_model_json(e, 0, &s), CF_OK);
  EXPECT_NE(take(s).find("calfuse-toy-model"), std::string::npos);
  EXPECT_EQ(cf_experiment_model_json(e, 1, &s), CF_ERR_VALIDATION);

  ASSERT_EQ(cf_experiment_set_beta(e, -1.0), CF_OK);
  EXPECT_EQ(cf_experiment_run(e, "now"), CF_ERR_VALIDATION);
  EXPECT_NE(std::string(cf_last_error()).find("beta"), std::string::npos);
  cf_experiment_free(e);
}

TEST_F(CApi, ConfigFileRelativePaths) {
  ASSERT_EQ(cf_synthetic_write(50, 2, 0.0, 2, path("corpus.csv").c_str(),
                               path("features.csv").c_str()),
            CF_OK);
  write(dir_ / "cfg.json",
        R"({"corpus": "corpus.csv", "feature_set": "dense", "features": "features.csv",
            "train": {"max_epochs": 2}, "model": {"dim": 4, "hidden_dim": 4,
            "feature_proj_dim": 4, "vocab_size": 64}})");
  cf_experiment* e = nullptr;
  ASSERT_EQ(cf_experiment_load_config(path("cfg.json").c_str(), &e), CF_OK) << cf_last_error();
  ASSERT_EQ(cf_experiment_run(e, ""), CF_OK) << cf_last_error();
  cf_experiment_free(e);
  write(dir_ / "bad.json", R"({"corpus": "corpus.csv", "unknown": true})");
  EXPECT_EQ(cf_experiment_load_config(path("bad.json").c_str(), &e), CF_ERR_VALIDATION);
}

}  // namespace
