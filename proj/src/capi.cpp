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

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "calfuse/csv.hpp"
#include "calfuse/error.hpp"
#include "calfuse/gradcheck.hpp"
#include "calfuse/pipeline.hpp"

struct cf_corpus {
  calfuse::Corpus value;
};

struct cf_dictionary {
  calfuse::LexiconDictionary value;
};

struct cf_predictions {
  calfuse::PredictionSet value;
};

struct cf_experiment {
  calfuse::ExperimentConfig config;
  std::optional<calfuse::ExperimentResult> result;
};

namespace {

thread_local std::string last_error;

cf_status fail(cf_status s, const char* what) {
  last_error = what;
  return s;
}

template <typename F>
cf_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return CF_OK;
  } catch (const calfuse::ValidationError& e) {
    return fail(CF_ERR_VALIDATION, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(CF_ERR_VALIDATION, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CF_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(CF_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(CF_ERR_RUNTIME, "unknown error");
  }
}

void need(const void* p, const char* name) {
  if (!p) throw calfuse::ValidationError(std::string(name) + " must not be null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string opt(const char* s) { return s ? s : ""; }

calfuse::CalibrationConfig calib(int bins, int ranges) {
  calfuse::CalibrationConfig c;
  c.bins = bins;
  c.ranges = ranges;
  c.validate();
  return c;
}

}  // namespace

extern "C" {

const char* cf_version(void) { return "0.1.0"; }

const char* cf_last_error(void) { return last_error.c_str(); }

void cf_string_free(char* s) { std::free(s); }

cf_status cf_corpus_load(const char* path, cf_corpus** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cf_corpus{calfuse::load_corpus(path)};
  });
}

void cf_corpus_free(cf_corpus* c) { delete c; }

size_t cf_corpus_size(const cf_corpus* c) { return c ? c->value.records.size() : 0; }

int cf_corpus_num_classes(const cf_corpus* c) { return c ? c->value.num_classes : 0; }

cf_status cf_dictionary_load(const char* path, cf_dictionary** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cf_dictionary{calfuse::LexiconDictionary::load(path)};
  });
}

void cf_dictionary_free(cf_dictionary* d) { delete d; }

size_t cf_dictionary_size(const cf_dictionary* d) { return d ? d->value.size() : 0; }

cf_status cf_features_extract(const cf_corpus* corpus, const char* feature_set,
                              const char* dict_path, const char* topics_path,
                              const char* features_path, char** csv_out) {
  return guarded([&] {
    need(corpus, "corpus");
    need(feature_set, "feature_set");
    need(csv_out, "csv_out");
    calfuse::FeatureTable table;
    table.ids = corpus->value.ids();
    table.values = calfuse::extract_features(corpus->value,
                                             calfuse::feature_set_from_string(feature_set),
                                             opt(dict_path), opt(topics_path),
                                             opt(features_path));
    *csv_out = dup(calfuse::feature_csv(table));
  });
}

cf_status cf_goss(const double* topics, size_t n, size_t c, double* out) {
  return guarded([&] {
    need(topics, "topics");
    need(out, "out");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto rows = static_cast<calfuse::Index>(n);
    const auto cols = static_cast<calfuse::Index>(c);
    calfuse::Matrix m = Eigen::Map<const RowMajor>(topics, rows, cols);
    const calfuse::Matrix g = calfuse::goss(calfuse::TopicMatrix(m));
    Eigen::Map<RowMajor>(out, rows, cols) = g;
  });
}

cf_status cf_predictions_load(const char* path, cf_predictions** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cf_predictions{calfuse::read_prediction_csv(path)};
  });
}

cf_status cf_predictions_create(const double* probs, size_t n, int k, const int* labels,
                                cf_predictions** out) {
  return guarded([&] {
    need(probs, "probs");
    need(labels, "labels");
    need(out, "out");
    calfuse::require(k >= 2, "need at least two classes");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    calfuse::Matrix m = Eigen::Map<const RowMajor>(probs, static_cast<calfuse::Index>(n), k);
    *out = new cf_predictions{calfuse::PredictionSet(m, std::vector<int>(labels, labels + n))};
  });
}

void cf_predictions_free(cf_predictions* p) { delete p; }

size_t cf_predictions_size(const cf_predictions* p) { return p ? p->value.size() : 0; }

cf_status cf_ece(const cf_predictions* p, int bins, double* out) {
  return guarded([&] {
    need(p, "predictions");
    need(out, "out");
    *out = calfuse::ece(p->value, calib(bins, 10)).ece;
  });
}

cf_status cf_ace(const cf_predictions* p, int ranges, double* out) {
  return guarded([&] {
    need(p, "predictions");
    need(out, "out");
    *out = calfuse::ace(p->value, calib(10, ranges)).ace;
  });
}

cf_status cf_reliability_csv(const cf_predictions* p, int bins, char** csv_out) {
  return guarded([&] {
    need(p, "predictions");
    need(csv_out, "csv_out");
    *csv_out = dup(calfuse::reliability_table_csv(
        calfuse::reliability_table(p->value, calib(bins, 10))));
  });
}

cf_status cf_calibration_summary(const cf_predictions* p, int bins, int ranges,
                                 char** json_out) {
  return guarded([&] {
    need(p, "predictions");
    need(json_out, "json_out");
    *json_out = dup(calfuse::calibration_summary_json(p->value, calib(bins, ranges)));
  });
}

cf_status cf_point_biserial(const double* values, const int* labels, size_t n, double* r,
                            double* p_value) {
  return guarded([&] {
    need(values, "values");
    need(labels, "labels");
    need(r, "r");
    need(p_value, "p_value");
    const auto pb = calfuse::point_biserial(std::vector<double>(values, values + n),
                                            std::vector<int>(labels, labels + n));
    *r = pb.r;
    *p_value = pb.p_value;
  });
}

cf_status cf_benjamini_hochberg(const double* p_values, size_t m, double q, int* reject) {
  return guarded([&] {
    need(p_values, "p_values");
    need(reject, "reject");
    const auto flags =
        calfuse::benjamini_hochberg(std::vector<double>(p_values, p_values + m), q);
    for (size_t i = 0; i < m; ++i) reject[i] = flags[i] ? 1 : 0;
  });
}

cf_status cf_linguistic_analysis(const cf_corpus* corpus, const cf_dictionary* dict, double q,
                                 char** csv_out) {
  return guarded([&] {
    need(corpus, "corpus");
    need(dict, "dictionary");
    need(csv_out, "csv_out");
    *csv_out = dup(calfuse::correlation_report_csv(
        calfuse::run_linguistic_analysis(corpus->value, dict->value, q)));
  });
}

cf_status cf_smoothed_cross_entropy(const double* logits, int k, int label, double alpha,
                                    double* loss, double* grad_out) {
  return guarded([&] {
    need(logits, "logits");
    need(loss, "loss");
    calfuse::require(k >= 2, "need at least two classes");
    const calfuse::Vector z = Eigen::Map<const calfuse::Vector>(logits, k);
    const auto r = calfuse::smoothed_cross_entropy_logits(z, label, {alpha, k});
    *loss = r.loss;
    if (grad_out) Eigen::Map<calfuse::Vector>(grad_out, k) = r.d_logits;
  });
}

cf_status cf_gradcheck(const char* op, uint64_t seed, double step, double tol,
                       double* max_rel_error, int* pass) {
  return guarded([&] {
    need(op, "op");
    const auto report =
        calfuse::gradient_check(calfuse::gradcheck_op_from_string(op), seed, step, tol);
    if (max_rel_error) *max_rel_error = report.max_rel_error;
    if (pass) *pass = report.pass ? 1 : 0;
  });
}

cf_status cf_experiment_create(cf_experiment** out) {
  return guarded([&] {
    need(out, "out");
    *out = new cf_experiment{};
  });
}

cf_status cf_experiment_load_config(const char* path, cf_experiment** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    const std::string base = std::filesystem::path(path).parent_path().string();
    auto e = std::make_unique<cf_experiment>();
    e->config = calfuse::ExperimentConfig::from_json(calfuse::read_text_file(path), base);
    *out = e.release();
  });
}

void cf_experiment_free(cf_experiment* e) { delete e; }

#define CF_SETTER(name, type, stmt)              \
  cf_status name(cf_experiment* e, type value) { \
    return guarded([&] {                         \
      need(e, "experiment");                     \
      stmt;                                      \
      e->result.reset();                         \
    });                                          \
  }

CF_SETTER(cf_experiment_set_seed, uint64_t,
          (e->config.split.seed = value, e->config.train.seed = value))
CF_SETTER(cf_experiment_set_corpus, const char*, e->config.corpus_path = opt(value))
CF_SETTER(cf_experiment_set_feature_set, const char*,
          e->config.feature_set = calfuse::feature_set_from_string(opt(value)))
CF_SETTER(cf_experiment_set_dict, const char*, e->config.dict_path = opt(value))
CF_SETTER(cf_experiment_set_features, const char*, e->config.features_path = opt(value))
CF_SETTER(cf_experiment_set_topics, const char*, e->config.topics_path = opt(value))
CF_SETTER(cf_experiment_set_alpha, double, e->config.smoothing_alpha = value)
CF_SETTER(cf_experiment_set_beta, double, e->config.beta = value)
CF_SETTER(cf_experiment_set_bins, int, e->config.calibration.bins = value)
CF_SETTER(cf_experiment_set_ranges, int, e->config.calibration.ranges = value)
CF_SETTER(cf_experiment_set_split_mode, const char*,
          e->config.split.mode = calfuse::split_mode_from_string(opt(value)))
CF_SETTER(cf_experiment_set_out_dir, const char*, e->config.out_dir = opt(value))

#undef CF_SETTER

cf_status cf_experiment_get_split_mode(const cf_experiment* e, char** mode_out) {
  return guarded([&] {
    need(e, "experiment");
    need(mode_out, "mode_out");
    *mode_out = dup(calfuse::to_string(e->config.split.mode));
  });
}

cf_status cf_experiment_get_out_dir(const cf_experiment* e, char** dir_out) {
  return guarded([&] {
    need(e, "experiment");
    need(dir_out, "dir_out");
    *dir_out = dup(e->config.out_dir);
  });
}

cf_status cf_experiment_config_json(const cf_experiment* e, char** json_out) {
  return guarded([&] {
    need(e, "experiment");
    need(json_out, "json_out");
    *json_out = dup(e->config.to_json());
  });
}

cf_status cf_experiment_run(cf_experiment* e, const char* timestamp) {
  return guarded([&] {
    need(e, "experiment");
    e->result.reset();
    e->result = calfuse::run_experiment(e->config, opt(timestamp));
  });
}

size_t cf_experiment_fold_count(const cf_experiment* e) {
  return e && e->result ? e->result->folds.size() : 0;
}

namespace {

const calfuse::ExperimentResult& finished(const cf_experiment* e) {
  need(e, "experiment");
  if (!e->result) throw calfuse::ValidationError("experiment has not been run");
  return *e->result;
}

}  // namespace

cf_status cf_experiment_report_json(const cf_experiment* e, char** json_out) {
  return guarded([&] {
    need(json_out, "json_out");
    *json_out = dup(finished(e).report_json);
  });
}

cf_status cf_experiment_predictions_csv(const cf_experiment* e, char** csv_out) {
  return guarded([&] {
    need(csv_out, "csv_out");
    *csv_out = dup(calfuse::prediction_csv(finished(e).predictions));
  });
}

cf_status cf_experiment_model_json(const cf_experiment* e, size_t fold, char** json_out) {
  return guarded([&] {
    need(json_out, "json_out");
    const auto& r = finished(e);
    if (fold >= r.models.size())
      throw calfuse::ValidationError("fold index " + std::to_string(fold) + " out of range");
    *json_out = dup(calfuse::params_to_json(r.models[fold]));
  });
}

cf_status cf_synthetic_write(size_t samples, int classes, double label_noise, uint64_t seed,
                             const char* corpus_path, const char* features_path) {
  return guarded([&] {
    need(corpus_path, "corpus_path");
    need(features_path, "features_path");
    calfuse::SyntheticSpec spec;
    spec.samples = samples;
    spec.num_classes = classes;
    spec.label_noise = label_noise;
    spec.seed = seed;
    const auto data = calfuse::make_synthetic(spec);
    calfuse::write_text_file(corpus_path, calfuse::corpus_csv(data.corpus));
    calfuse::write_text_file(features_path, calfuse::feature_csv(data.features));
  });
}

}  // extern "C"
