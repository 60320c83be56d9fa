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

/* C interface to the calfuse core. All functions return a cf_status; on a
 * non-zero status cf_last_error() describes the failure. Strings returned
 * through char** out-parameters are owned by the caller and released with
 * cf_string_free(). */

#ifndef CALFUSE_CALFUSE_H_
#define CALFUSE_CALFUSE_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CF_API __declspec(dllexport)
#elif defined(__GNUC__)
#define CF_API __attribute__((visibility("default")))
#else
#define CF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cf_status {
  CF_OK = 0,
  CF_ERR_VALIDATION = 1, /* bad input, schema or precondition */
  CF_ERR_RUNTIME = 2     /* numeric failure, I/O, divergence */
} cf_status;

typedef struct cf_corpus cf_corpus;
typedef struct cf_dictionary cf_dictionary;
typedef struct cf_predictions cf_predictions;
typedef struct cf_experiment cf_experiment;

CF_API const char* cf_version(void);
/* Message of the last failure on the calling thread, "" if none. */
CF_API const char* cf_last_error(void);
CF_API void cf_string_free(char* s);

/* Corpus and dictionary */
CF_API cf_status cf_corpus_load(const char* path, cf_corpus** out);
CF_API void cf_corpus_free(cf_corpus* c);
CF_API size_t cf_corpus_size(const cf_corpus* c);
CF_API int cf_corpus_num_classes(const cf_corpus* c);

CF_API cf_status cf_dictionary_load(const char* path, cf_dictionary** out);
CF_API void cf_dictionary_free(cf_dictionary* d);
CF_API size_t cf_dictionary_size(const cf_dictionary* d);

/* Feature extraction. feature_set is one of lexicon, dictionary, goss, dense,
 * none; unused paths may be NULL. Output is CSV with header id,f0..f{C-1}. */
CF_API cf_status cf_features_extract(const cf_corpus* corpus, const char* feature_set,
                                     const char* dict_path, const char* topics_path,
                                     const char* features_path, char** csv_out);

/* Row-major n x c in, row-major n x c out. */
CF_API cf_status cf_goss(const double* topics, size_t n, size_t c, double* out);

/* Predictions and calibration */
CF_API cf_status cf_predictions_load(const char* path, cf_predictions** out);
CF_API cf_status cf_predictions_create(const double* probs, size_t n, int k,
                                       const int* labels, cf_predictions** out);
CF_API void cf_predictions_free(cf_predictions* p);
CF_API size_t cf_predictions_size(const cf_predictions* p);

CF_API cf_status cf_ece(const cf_predictions* p, int bins, double* out);
CF_API cf_status cf_ace(const cf_predictions* p, int ranges, double* out);
CF_API cf_status cf_reliability_csv(const cf_predictions* p, int bins, char** csv_out);
CF_API cf_status cf_calibration_summary(const cf_predictions* p, int bins, int ranges,
                                        char** json_out);

/* Statistics */
CF_API cf_status cf_point_biserial(const double* values, const int* labels, size_t n,
                                   double* r, double* p_value);
/* reject[i] is set to 1 for rejected hypotheses, 0 otherwise. */
CF_API cf_status cf_benjamini_hochberg(const double* p_values, size_t m, double q,
                                       int* reject);
/* Correlation report CSV for a binary corpus. */
CF_API cf_status cf_linguistic_analysis(const cf_corpus* corpus, const cf_dictionary* dict,
                                        double q, char** csv_out);

/* Loss and gradient checks */
CF_API cf_status cf_smoothed_cross_entropy(const double* logits, int k, int label,
                                           double alpha, double* loss, double* grad_out);
/* op is fusion, smoothed_ce or toy_model. */
CF_API cf_status cf_gradcheck(const char* op, uint64_t seed, double step, double tol,
                              double* max_rel_error, int* pass);

/* Experiments */
CF_API cf_status cf_experiment_create(cf_experiment** out);
CF_API cf_status cf_experiment_load_config(const char* path, cf_experiment** out);
CF_API void cf_experiment_free(cf_experiment* e);
/* Seeds both the split and the training RNG. */
CF_API cf_status cf_experiment_set_seed(cf_experiment* e, uint64_t seed);
CF_API cf_status cf_experiment_set_corpus(cf_experiment* e, const char* path);
CF_API cf_status cf_experiment_set_feature_set(cf_experiment* e, const char* name);
CF_API cf_status cf_experiment_set_dict(cf_experiment* e, const char* path);
CF_API cf_status cf_experiment_set_features(cf_experiment* e, const char* path);
CF_API cf_status cf_experiment_set_topics(cf_experiment* e, const char* path);
CF_API cf_status cf_experiment_set_alpha(cf_experiment* e, double alpha);
CF_API cf_status cf_experiment_set_beta(cf_experiment* e, double beta);
CF_API cf_status cf_experiment_set_bins(cf_experiment* e, int bins);
CF_API cf_status cf_experiment_set_ranges(cf_experiment* e, int ranges);
/* fixed-test, holdout-80-20 or stratified-5-fold */
CF_API cf_status cf_experiment_set_split_mode(cf_experiment* e, const char* mode);
CF_API cf_status cf_experiment_get_split_mode(const cf_experiment* e, char** mode_out);
CF_API cf_status cf_experiment_set_out_dir(cf_experiment* e, const char* dir);
CF_API cf_status cf_experiment_get_out_dir(const cf_experiment* e, char** dir_out);
CF_API cf_status cf_experiment_config_json(const cf_experiment* e, char** json_out);

CF_API cf_status cf_experiment_run(cf_experiment* e, const char* timestamp);
CF_API size_t cf_experiment_fold_count(const cf_experiment* e);
CF_API cf_status cf_experiment_report_json(const cf_experiment* e, char** json_out);
/* Test predictions pooled over folds, header id,true_label,p0.. */
CF_API cf_status cf_experiment_predictions_csv(const cf_experiment* e, char** csv_out);
CF_API cf_status cf_experiment_model_json(const cf_experiment* e, size_t fold,
                                          char** json_out);

/* Synthetic feature-informative corpus: writes corpus CSV and dense feature CSV. */
CF_API cf_status cf_synthetic_write(size_t samples, int classes, double label_noise,
                                    uint64_t seed, const char* corpus_path,
                                    const char* features_path);

#ifdef __cplusplus
}
#endif

#endif  // CALFUSE_CALFUSE_H_
