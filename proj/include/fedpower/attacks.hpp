// Copyright 2026 The FedPower Authors
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

#ifndef FEDPOWER_ATTACKS_HPP_
#define FEDPOWER_ATTACKS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "fedpower/errors.hpp"
#include "fedpower/rng.hpp"
#include "fedpower/task.hpp"

namespace fedpower {

// Membership-inference evaluation of a released model. Attacks see only the
// released model's outputs and an auxiliary same-distribution pool; the
// ground-truth membership bit is evaluator-side information used to score
// the attack, never an attack input.

struct AttackRecord {
  std::int64_t sample_id = 0;
  int label = 0;
  double loss = 0.0;                  // cross-entropy, nats
  std::vector<double> confidence;     // softmax probabilities
  bool is_member = false;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct AttackResult {
  // Higher score = more member-like, aligned with the ROC sweep direction.
  std::vector<double> scores;
  std::vector<char> is_member;
  double threshold = 0.0;   // operating threshold used for `accuracy`
  double accuracy = 0.0;    // fraction of correct membership calls
  double balanced_threshold = 0.0;
  double balanced_accuracy = 0.0;
  std::vector<RocPoint> roc;
  double auc = 0.5;
  bool sigma_floored = false;  // calibration attack: degenerate sigma_out seen
};

inline double accuracy_at_threshold(const std::vector<double>& scores,
                                    const std::vector<char>& members,
                                    double threshold) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted == static_cast<bool>(members[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

// Threshold sweep over distinct scores (predict member iff score >= t).
// Fills ROC points, trapezoid AUC, and the balanced-accuracy threshold.
inline AttackResult roc_curve(std::vector<double> scores,
                              std::vector<char> members) {
  if (scores.size() != members.size() || scores.empty()) {
    throw DomainError("roc_curve: empty or mismatched inputs");
  }
  std::size_t positives = 0;
  for (char m : members) positives += m ? 1 : 0;
  const std::size_t negatives = members.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DomainError("roc_curve: need both members and non-members");
  }

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  AttackResult out;
  out.scores = std::move(scores);
  out.is_member = std::move(members);
  out.roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  double auc = 0.0;
  double best_balanced = -1.0, best_threshold = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double score = out.scores[order[i]];
    while (i < order.size() && out.scores[order[i]] == score) {
      if (out.is_member[order[i]]) ++tp; else ++fp;
      ++i;
    }
    const RocPoint prev = out.roc.back();
    RocPoint pt;
    pt.fpr = static_cast<double>(fp) / static_cast<double>(negatives);
    pt.tpr = static_cast<double>(tp) / static_cast<double>(positives);
    pt.threshold = score;
    auc += (pt.fpr - prev.fpr) * 0.5 * (pt.tpr + prev.tpr);
    const double balanced = 0.5 * (pt.tpr + 1.0 - pt.fpr);
    if (balanced > best_balanced) {
      best_balanced = balanced;
      best_threshold = score;
    }
    out.roc.push_back(pt);
  }
  out.auc = auc;
  out.balanced_threshold = best_threshold;
  out.balanced_accuracy =
      accuracy_at_threshold(out.scores, out.is_member, best_threshold);
  out.threshold = best_threshold;
  out.accuracy = out.balanced_accuracy;
  return out;
}

// Evaluates every sample of `data` under `model` into attack records.
inline std::vector<AttackRecord> collect_records(const LinearModel& model,
                                                 const Dataset& data,
                                                 bool member_flag,
                                                 std::int64_t id_offset) {
  std::vector<AttackRecord> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    SampleEval eval = evaluate_sample(model, data, i);
    AttackRecord rec;
    rec.sample_id = id_offset + static_cast<std::int64_t>(i);
    rec.label = data.labels[i];
    rec.loss = eval.loss;
    rec.confidence = std::move(eval.confidence);
    rec.is_member = member_flag;
    out.push_back(std::move(rec));
  }
  return out;
}

// Evaluator-side ground truth for scoring a released model: samples that were
// in the target's training data and fresh same-distribution samples.
struct AttackEvalData {
  const Dataset* members = nullptr;
  const Dataset* non_members = nullptr;
};

inline std::vector<AttackRecord> target_records(const LinearModel& target,
                                                const AttackEvalData& eval) {
  std::vector<AttackRecord> records =
      collect_records(target, *eval.members, true, 1 << 24);
  std::vector<AttackRecord> non =
      collect_records(target, *eval.non_members, false, 2 << 24);
  records.insert(records.end(), std::make_move_iterator(non.begin()),
                 std::make_move_iterator(non.end()));
  return records;
}

using Trainer = std::function<LinearModel(const Dataset&, RngStream&)>;

struct ShadowModel {
  LinearModel model;
  std::vector<std::size_t> train_indices;  // into the aux pool
};

struct ShadowEnsemble {
  std::vector<ShadowModel> shadows;
  std::vector<std::size_t> holdout_indices;  // aux samples no shadow trained on
};

// Splits aux into `count` disjoint shadow training subsets plus a holdout
// block, and trains one shadow per subset with the supplied trainer.
inline ShadowEnsemble train_shadow_models(const Dataset& aux,
                                          std::size_t count,
                                          const Trainer& trainer,
                                          RngStream& rng) {
  if (count < 2) throw ConfigError("shadow models: need at least 2");
  if (aux.size() < (count + 1) * 2) {
    throw ConfigError("shadow models: aux pool too small for " +
                      std::to_string(count) + " disjoint subsets");
  }
  std::vector<std::size_t> perm =
      rng.sample_without_replacement(aux.size(), aux.size());
  const std::size_t subset = aux.size() / (count + 1);
  ShadowEnsemble out;
  out.shadows.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    ShadowModel shadow;
    shadow.train_indices.assign(perm.begin() + s * subset,
                                perm.begin() + (s + 1) * subset);
    Dataset train = subset_of(aux, shadow.train_indices);
    RngStream shadow_rng = rng.child({static_cast<std::int64_t>(s)});
    shadow.model = trainer(train, shadow_rng);
    out.shadows.push_back(std::move(shadow));
  }
  out.holdout_indices.assign(perm.begin() + count * subset, perm.end());
  return out;
}

// ---------------------------------------------------------------------------
// Shadow-model attack
// ---------------------------------------------------------------------------

namespace detail {

// Attack feature vector: confidence values sorted descending, then the loss.
inline std::vector<double> attack_features(const AttackRecord& rec) {
  std::vector<double> f = rec.confidence;
  std::sort(f.begin(), f.end(), std::greater<double>());
  f.push_back(rec.loss);
  return f;
}

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;

  double score(const std::vector<double>& x) const {
    double z = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * x[i];
    return 1.0 / (1.0 + std::exp(-z));
  }
};

// Full-batch gradient descent on logistic loss with a little L2; enough for
// the low-dimensional attack features.
inline LogisticModel fit_logistic(const std::vector<std::vector<double>>& xs,
                                  const std::vector<char>& ys) {
  LogisticModel model;
  if (xs.empty()) return model;
  const std::size_t dim = xs.front().size();
  model.weights.assign(dim, 0.0);
  constexpr int kIters = 300;
  constexpr double kLr = 1.0;
  constexpr double kL2 = 1e-4;
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  for (int it = 0; it < kIters; ++it) {
    std::vector<double> grad(dim, 0.0);
    double grad_bias = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double err = model.score(xs[i]) - (ys[i] ? 1.0 : 0.0);
      for (std::size_t d = 0; d < dim; ++d) grad[d] += err * xs[i][d];
      grad_bias += err;
    }
    for (std::size_t d = 0; d < dim; ++d) {
      model.weights[d] -=
          kLr * (grad[d] * inv_n + kL2 * model.weights[d]);
    }
    model.bias -= kLr * grad_bias * inv_n;
  }
  return model;
}

}  // namespace detail

// Core of the shadow attack: fit one binary membership classifier per true
// label on the shadow records (global fallback when a label is unseen), then
// score the target records with their label's classifier.
inline AttackResult shadow_attack_from_records(
    const std::vector<AttackRecord>& target,
    const std::vector<AttackRecord>& shadow_records, std::size_t class_count) {
  if (target.empty() || shadow_records.empty()) {
    throw DomainError("shadow attack: empty record sets");
  }
  std::vector<std::vector<std::vector<double>>> xs_by_class(class_count);
  std::vector<std::vector<char>> ys_by_class(class_count);
  std::vector<std::vector<double>> xs_all;
  std::vector<char> ys_all;
  for (const AttackRecord& rec : shadow_records) {
    if (rec.label < 0 || static_cast<std::size_t>(rec.label) >= class_count) {
      throw DomainError("shadow attack: record label out of range");
    }
    std::vector<double> f = detail::attack_features(rec);
    xs_by_class[rec.label].push_back(f);
    ys_by_class[rec.label].push_back(rec.is_member ? 1 : 0);
    xs_all.push_back(std::move(f));
    ys_all.push_back(rec.is_member ? 1 : 0);
  }
  const detail::LogisticModel global = detail::fit_logistic(xs_all, ys_all);
  std::vector<std::optional<detail::LogisticModel>> per_class(class_count);
  for (std::size_t c = 0; c < class_count; ++c) {
    bool has_member = false, has_non = false;
    for (char y : ys_by_class[c]) (y ? has_member : has_non) = true;
    if (has_member && has_non) {
      per_class[c] = detail::fit_logistic(xs_by_class[c], ys_by_class[c]);
    }
  }
  std::vector<double> scores;
  std::vector<char> members;
  scores.reserve(target.size());
  members.reserve(target.size());
  for (const AttackRecord& rec : target) {
    if (rec.label < 0 || static_cast<std::size_t>(rec.label) >= class_count) {
      throw DomainError("shadow attack: record label out of range");
    }
    const detail::LogisticModel& model =
        per_class[rec.label] ? *per_class[rec.label] : global;
    scores.push_back(model.score(detail::attack_features(rec)));
    members.push_back(rec.is_member ? 1 : 0);
  }
  return roc_curve(std::move(scores), std::move(members));
}

// Full shadow-model attack: train `shadow_count` shadows on disjoint aux
// subsets with the target's own training procedure, learn membership
// classifiers from their confidences, and score the target's records.
inline AttackResult shadow_model_attack(const LinearModel& target,
                                        const AttackEvalData& eval,
                                        const Dataset& aux,
                                        std::size_t shadow_count,
                                        const Trainer& trainer,
                                        std::size_t class_count,
                                        RngStream& rng) {
  ShadowEnsemble ensemble =
      train_shadow_models(aux, shadow_count, trainer, rng);
  std::vector<AttackRecord> shadow_records;
  Dataset holdout = subset_of(aux, ensemble.holdout_indices);
  for (std::size_t s = 0; s < ensemble.shadows.size(); ++s) {
    const ShadowModel& shadow = ensemble.shadows[s];
    Dataset train = subset_of(aux, shadow.train_indices);
    std::vector<AttackRecord> in =
        collect_records(shadow.model, train, true, 0);
    std::vector<AttackRecord> out =
        collect_records(shadow.model, holdout, false, 0);
    shadow_records.insert(shadow_records.end(),
                          std::make_move_iterator(in.begin()),
                          std::make_move_iterator(in.end()));
    shadow_records.insert(shadow_records.end(),
                          std::make_move_iterator(out.begin()),
                          std::make_move_iterator(out.end()));
  }
  return shadow_attack_from_records(target_records(target, eval),
                                    shadow_records, class_count);
}

// ---------------------------------------------------------------------------
// Loss-threshold attack
// ---------------------------------------------------------------------------

// Core of the loss attack on a precomputed loss table: member iff
// target loss < tau. Scores are negated losses so that higher = more
// member-like; the headline accuracy is taken at the attack's own
// threshold, not the optimal one.
inline AttackResult loss_attack_from_losses(
    const std::vector<double>& target_losses,
    const std::vector<char>& member_flags, double tau) {
  std::vector<double> scores(target_losses.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = -target_losses[i];
  AttackResult result = roc_curve(std::move(scores), member_flags);
  result.threshold = -tau;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < target_losses.size(); ++i) {
    const bool predicted = target_losses[i] < tau;
    if (predicted == static_cast<bool>(member_flags[i])) ++correct;
  }
  result.accuracy = static_cast<double>(correct) /
                    static_cast<double>(target_losses.size());
  return result;
}

// Declares a sample a member iff its loss under the target model is below the
// shadow model's average loss over the auxiliary pool.
inline AttackResult loss_threshold_attack(const LinearModel& target,
                                          const AttackEvalData& eval,
                                          const LinearModel& shadow,
                                          const Dataset& aux) {
  if (aux.size() == 0) throw DomainError("loss attack: empty aux pool");
  const double tau = dataset_loss(shadow, aux);
  std::vector<AttackRecord> records = target_records(target, eval);
  std::vector<double> losses;
  std::vector<char> members;
  losses.reserve(records.size());
  members.reserve(records.size());
  for (const AttackRecord& rec : records) {
    losses.push_back(rec.loss);
    members.push_back(rec.is_member ? 1 : 0);
  }
  return loss_attack_from_losses(losses, members, tau);
}

// ---------------------------------------------------------------------------
// Calibration attack
// ---------------------------------------------------------------------------

inline constexpr double kSigmaOutFloor = 1e-6;

// Core of the calibration attack on precomputed loss tables. Record i gets
// z-score (target_loss - mu_out) / sigma_out over the shadows that exclude
// it (excluded[s][i] true when shadow s did NOT train on record i); member
// iff z < tau. Degenerate sigma_out is floored and flagged.
inline AttackResult calibration_from_losses(
    const std::vector<double>& target_losses,
    const std::vector<char>& member_flags,
    const std::vector<std::vector<double>>& shadow_losses,
    const std::vector<std::vector<char>>& excluded,
    std::optional<double> tau) {
  const std::size_t n = target_losses.size();
  bool floored = false;
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < shadow_losses.size(); ++s) {
      if (!excluded[s][i]) continue;
      sum += shadow_losses[s][i];
      sum_sq += shadow_losses[s][i] * shadow_losses[s][i];
      ++count;
    }
    if (count < 2) {
      throw ConfigError(
          "calibration attack: each sample needs >= 2 excluding shadows");
    }
    const double mu = sum / static_cast<double>(count);
    double var = sum_sq / static_cast<double>(count) - mu * mu;
    if (var < 0.0) var = 0.0;
    double sigma_out = std::sqrt(var);
    if (sigma_out < kSigmaOutFloor) {
      sigma_out = kSigmaOutFloor;
      floored = true;
    }
    z[i] = (target_losses[i] - mu) / sigma_out;
  }
  // Low z-score = member, so the ROC sweep runs on the negated score.
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = -z[i];
  AttackResult result = roc_curve(std::move(scores), member_flags);
  result.sigma_floored = floored;
  if (tau) {
    // Member iff z < tau, i.e. -z >= -tau (strictness differs only on ties).
    result.threshold = -*tau;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool predicted = z[i] < *tau;
      if (predicted == static_cast<bool>(member_flags[i])) ++correct;
    }
    result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  return result;
}

// Calibration attack against a released model: per-sample z-scores of the
// target loss against the sample's out-of-training shadow loss distribution.
// Eval samples are never part of the aux pool, so every shadow excludes them.
inline AttackResult calibration_attack(const LinearModel& target,
                                       const AttackEvalData& eval,
                                       const std::vector<ShadowModel>& shadows,
                                       std::optional<double> tau) {
  if (shadows.size() < 2) {
    throw ConfigError("calibration attack: needs >= 2 shadow models");
  }
  std::vector<AttackRecord> records = target_records(target, eval);
  const std::size_t n = records.size();
  std::vector<double> target_losses(n);
  std::vector<char> member_flags(n);
  for (std::size_t i = 0; i < n; ++i) {
    target_losses[i] = records[i].loss;
    member_flags[i] = records[i].is_member ? 1 : 0;
  }
  const std::size_t member_count = eval.members->size();
  std::vector<std::vector<double>> shadow_losses(
      shadows.size(), std::vector<double>(n, 0.0));
  std::vector<std::vector<char>> excluded(shadows.size(),
                                          std::vector<char>(n, 1));
  for (std::size_t s = 0; s < shadows.size(); ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool from_members = i < member_count;
      const Dataset& src = from_members ? *eval.members : *eval.non_members;
      const std::size_t idx = from_members ? i : i - member_count;
      shadow_losses[s][i] =
          evaluate_sample(shadows[s].model, src, idx).loss;
    }
  }
  return calibration_from_losses(target_losses, member_flags, shadow_losses,
                                 excluded, tau);
}

}  // namespace fedpower

#endif  // FEDPOWER_ATTACKS_HPP_
