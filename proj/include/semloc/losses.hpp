/*
 * Copyright 2026 The semloc Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <span>
#include <string>
#include <vector>

#include "semloc/autodiff.hpp"
#include "semloc/encoder.hpp"

namespace semloc {

enum class LossKind { kContrastive, kTriplet, kInfoNCE };

std::string to_string(LossKind kind);
/// "contrastive", "triplet" or "infonce"; throws ConfigError otherwise.
LossKind parse_loss_kind(const std::string& name);

/// y*d^2 + (1-y)*max(0, margin-d)^2 with d the Euclidean distance.
ad::Var contrastive_loss(ad::Var za, ad::Var zb, bool similar, double margin);

/// -log softmax of the positive among {positive, negatives} with cosine
/// logits scaled by 1/temperature. Needs at least one negative.
ad::Var infonce_loss(ad::Var q, ad::Var positive, std::span<const ad::Var> negatives, double temperature);

struct TripletLoss {
  ad::Var loss;
  std::size_t used = 0;
  std::size_t excluded = 0;  // anchors without a positive or a negative
};

/// Batch-hard triplet loss: per anchor the farthest positive and the nearest
/// negative, hinge averaged over the anchors that have both. With no usable
/// anchor the loss is a zero constant.
TripletLoss triplet_batch_hard(ad::Tape& tape, std::span<const ad::Var> anchors,
                               const std::vector<std::vector<ad::Var>>& positives,
                               const std::vector<std::vector<ad::Var>>& negatives, double margin);

// Value-level conveniences.
double contrastive_loss(const Embedding& za, const Embedding& zb, bool similar, double margin);
double infonce_loss(const Embedding& q, const Embedding& positive, std::span<const Embedding> negatives,
                    double temperature);

}  // namespace semloc
