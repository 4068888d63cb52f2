// Copyright 2026 The lipdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LIPDP_LOSSES_H_
#define LIPDP_LOSSES_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace lipdp {

enum class LossType {
  kTauCategoricalCrossentropy,
  kMulticlassHinge,
  kKantorovichRubinstein,
  kHingeKR,
  kKCosineSimilarity,
  kBinaryCrossentropy,
};

std::string_view to_string(LossType type);
std::optional<LossType> loss_type_from_string(std::string_view name);

// Classification loss together with the hyperparameters its Lipschitz
// constant depends on. Labels are one-hot rows; the binary cross-entropy
// takes a single logit and a label in {-1, +1}.
struct LossKind {
  LossType type = LossType::kTauCategoricalCrossentropy;
  double tau = 1.0;     // temperature
  double margin = 1.0;  // hinge margin m
  double alpha = 0.0;   // hinge weight in HKR
  double k = 1.0;       // norm-preservation factor for cosine similarity
  double x_min = 1.0;   // minimal input norm for cosine similarity

  static LossKind tau_cce(double tau);
  static LossKind multiclass_hinge(double margin);
  static LossKind kantorovich_rubinstein();
  static LossKind hinge_kr(double margin, double alpha);
  static LossKind k_cosine_similarity(double k, double x_min);
  static LossKind binary_crossentropy();

  friend bool operator==(const LossKind&, const LossKind&) = default;
};

void validate(const LossKind& kind);
// Rejects labels that are not one-hot (or not +-1 for the binary loss).
void validate_labels(const LossKind& kind, std::span<const double> y_hat,
                     std::span<const double> y);

// Per-class terms of the multi-output losses (hinge, KR, HKR) before the mean
// reduction over classes. Hinge: max(0, m/2 - s_i yhat_i); KR: -s_i yhat_i,
// with s_i = +1 on the true class and -1 elsewhere.
std::vector<double> per_class_values(const LossKind& kind,
                                     std::span<const double> y_hat,
                                     std::span<const double> y);

double loss_value(const LossKind& kind, std::span<const double> y_hat,
                  std::span<const double> y);
std::vector<double> loss_gradient(const LossKind& kind,
                                  std::span<const double> y_hat,
                                  std::span<const double> y);

// Upper bound on ||d loss / d yhat||_2.
double lipschitz_constant(const LossKind& kind);

// Predicted class index (argmax, or 0/1 from the sign for the binary loss).
std::size_t predicted_class(const LossKind& kind, std::span<const double> y_hat);
std::size_t label_class(const LossKind& kind, std::span<const double> y);

}  // namespace lipdp

#endif  // LIPDP_LOSSES_H_
