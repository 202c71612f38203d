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

#include "semloc/losses.hpp"

#include <cmath>

#include "semloc/errors.hpp"

namespace semloc {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kContrastive:
      return "contrastive";
    case LossKind::kTriplet:
      return "triplet";
    case LossKind::kInfoNCE:
      return "infonce";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "contrastive") return LossKind::kContrastive;
  if (name == "triplet") return LossKind::kTriplet;
  if (name == "infonce") return LossKind::kInfoNCE;
  throw ConfigError("unknown loss '" + name + "' (expected contrastive, triplet or infonce)");
}

namespace {

void check_margin(double margin) {
  if (!(margin > 0.0) || !std::isfinite(margin)) throw ConfigError("loss margin must be positive");
}

ad::Var cosine(ad::Var a, ad::Var b) { return ad::dot(ad::l2_normalize(a), ad::l2_normalize(b)); }

}  // namespace

ad::Var contrastive_loss(ad::Var za, ad::Var zb, bool similar, double margin) {
  check_margin(margin);
  if (za.shape() != zb.shape()) throw ShapeError("contrastive_loss: embeddings differ in shape");
  const ad::Var diff = ad::sub(za, zb);
  if (similar) return ad::dot(diff, diff);
  ad::Tape& tape = za.tape();
  const ad::Var gap = ad::relu(ad::sub(tape.constant(Tensor::scalar(margin)), ad::l2_norm(diff)));
  return ad::mul(gap, gap);
}

ad::Var infonce_loss(ad::Var q, ad::Var positive, std::span<const ad::Var> negatives, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("InfoNCE temperature must be positive");
  if (negatives.empty()) throw ValidationError("InfoNCE needs at least one negative");
  const double inv_t = 1.0 / temperature;
  const ad::Var pos = ad::scale(cosine(q, positive), inv_t);
  std::vector<ad::Var> logits{ad::reshape(pos, {1})};
  for (const ad::Var& n : negatives) logits.push_back(ad::reshape(ad::scale(cosine(q, n), inv_t), {1}));
  return ad::sub(ad::logsumexp(ad::concat(logits)), pos);
}

TripletLoss triplet_batch_hard(ad::Tape& tape, std::span<const ad::Var> anchors,
                               const std::vector<std::vector<ad::Var>>& positives,
                               const std::vector<std::vector<ad::Var>>& negatives, double margin) {
  check_margin(margin);
  if (positives.size() != anchors.size() || negatives.size() != anchors.size()) {
    throw ValidationError("triplet loss: positive and negative sets must be given per anchor");
  }
  TripletLoss out;
  ad::Var total;
  const ad::Var m = tape.constant(Tensor::scalar(margin));
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (positives[a].empty() || negatives[a].empty()) {
      ++out.excluded;
      continue;
    }
    ad::Var hardest_pos, hardest_neg;
    for (const ad::Var& p : positives[a]) {
      const ad::Var d = ad::l2_norm(ad::sub(anchors[a], p));
      if (!hardest_pos.valid() || d.value().item() > hardest_pos.value().item()) hardest_pos = d;
    }
    for (const ad::Var& n : negatives[a]) {
      const ad::Var d = ad::l2_norm(ad::sub(anchors[a], n));
      if (!hardest_neg.valid() || d.value().item() < hardest_neg.value().item()) hardest_neg = d;
    }
    const ad::Var hinge = ad::relu(ad::add(ad::sub(hardest_pos, hardest_neg), m));
    total = total.valid() ? ad::add(total, hinge) : hinge;
    ++out.used;
  }
  out.loss = out.used == 0 ? tape.constant(Tensor::scalar(0.0))
                           : ad::scale(total, 1.0 / static_cast<double>(out.used));
  return out;
}

double contrastive_loss(const Embedding& za, const Embedding& zb, bool similar, double margin) {
  ad::Tape tape;
  const ad::Var a = tape.constant(Tensor::vector(za));
  const ad::Var b = tape.constant(Tensor::vector(zb));
  return contrastive_loss(a, b, similar, margin).value().item();
}

double infonce_loss(const Embedding& q, const Embedding& positive, std::span<const Embedding> negatives,
                    double temperature) {
  ad::Tape tape;
  std::vector<ad::Var> negs;
  for (const Embedding& n : negatives) negs.push_back(tape.constant(Tensor::vector(n)));
  return infonce_loss(tape.constant(Tensor::vector(q)), tape.constant(Tensor::vector(positive)), negs, temperature)
      .value()
      .item();
}

}  // namespace semloc
