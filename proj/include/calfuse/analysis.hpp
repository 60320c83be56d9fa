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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "calfuse/fusion.hpp"

namespace calfuse {

struct ClassStats {
  std::size_t support = 0;  // true samples of the class
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Binary fields (positive class = 1) are set only when K = 2.
struct MetricReport {
  int num_classes = 0;
  std::size_t samples = 0;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::vector<ClassStats> per_class;
};

/// A class never predicted has precision 0; a class with no true samples has
/// recall 0; F1 is 0 when precision and recall are both 0.
MetricReport classification_metrics(const std::vector<int>& true_labels,
                                    const std::vector<int>& predicted_labels,
                                    int num_classes);

/// Regularized incomplete beta I_x(a, b) by continued fraction (modified
/// Lentz), relative tolerance 1e-15.
double incomplete_beta(double x, double a, double b);

/// Two-sided p-value of a Student-t statistic with `dof` degrees of freedom.
double student_t_two_sided(double t, double dof);

struct PointBiserial {
  double r = 0.0;
  double p_value = 1.0;
};

/// ((M1 - M0) / s_n) * sqrt(n1 n0 / n^2), s_n the population standard
/// deviation. Throws ValidationError ("correlation undefined") when n < 3,
/// only one label group is present, or the values are constant.
PointBiserial point_biserial(const std::vector<double>& values,
                             const std::vector<int>& labels);

/// Step-up procedure: rejects the k smallest p-values for the largest k with
/// p_(k) <= k q / m. Flags are returned in input order.
std::vector<bool> benjamini_hochberg(const std::vector<double>& p_values, double q);

enum class Direction { PositiveClass, NegativeClass };
const char* to_string(Direction d);

struct CorrelationRow {
  std::string feature;
  double r = 0.0;
  double p_value = 1.0;
  bool significant = false;
  Direction direction = Direction::PositiveClass;
};

struct CorrelationReport {
  double q = 0.05;
  std::vector<CorrelationRow> rows;    // sorted by |r| desc, then name
  std::vector<std::string> undefined;  // constant columns, excluded from BH
};

/// Point-biserial correlation of every feature column with the binary label,
/// then Benjamini-Hochberg over the defined columns.
CorrelationReport linguistic_analysis(const Matrix& features,
                                      const std::vector<std::string>& feature_names,
                                      const std::vector<int>& labels, double q);

/// Columns class_direction,feature,correlation,p_value,significant. Undefined
/// features follow the ranked rows with direction "undefined" and NA values.
std::string correlation_report_csv(const CorrelationReport& report);

}  // namespace calfuse
