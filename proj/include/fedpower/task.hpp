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

#ifndef FEDPOWER_TASK_HPP_
#define FEDPOWER_TASK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "fedpower/config.hpp"
#include "fedpower/errors.hpp"
#include "fedpower/linalg.hpp"
#include "fedpower/rng.hpp"

namespace fedpower {

struct Dataset {
  DenseMatrix features;     // count x n
  std::vector<int> labels;  // values in [0, classes)

  std::size_t size() const { return labels.size(); }
};

inline Dataset subset_of(const Dataset& data,
                         const std::vector<std::size_t>& indices) {
  Dataset out;
  out.features = DenseMatrix(indices.size(), data.features.cols());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (std::size_t j = 0; j < data.features.cols(); ++j) {
      out.features(i, j) = data.features(indices[i], j);
    }
    out.labels[i] = data.labels[indices[i]];
  }
  return out;
}

// Columns of the result are the selected samples (n x batch layout used by
// all forward/gradient computations).
inline DenseMatrix gather_columns(const Dataset& data,
                                  const std::vector<std::size_t>& indices) {
  const std::size_t n = data.features.cols();
  DenseMatrix x(n, indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) x(i, j) = data.features(indices[j], i);
  }
  return x;
}

// Numerically stable column-wise softmax, in place.
inline void softmax_columns(DenseMatrix& logits) {
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    double hi = logits(0, j);
    for (std::size_t i = 1; i < logits.rows(); ++i)
      hi = std::max(hi, logits(i, j));
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      logits(i, j) = std::exp(logits(i, j) - hi);
      sum += logits(i, j);
    }
    for (std::size_t i = 0; i < logits.rows(); ++i) logits(i, j) /= sum;
  }
}

// Mean cross-entropy (nats) of softmax probabilities against labels.
inline double mean_cross_entropy(const DenseMatrix& probs,
                                 const std::vector<int>& labels) {
  double loss = 0.0;
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    loss -= std::log(std::max(probs(labels[j], j), 1e-300));
  }
  return loss / static_cast<double>(probs.cols());
}

// Evaluation of a merged linear model W (m x n): logits are W x.
struct LinearModel {
  DenseMatrix w;
};

inline double dataset_loss(const LinearModel& model, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  DenseMatrix probs = matmul(model.w, gather_columns(data, all));
  softmax_columns(probs);
  return mean_cross_entropy(probs, data.labels);
}

inline double dataset_accuracy(const LinearModel& model, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  DenseMatrix logits = matmul(model.w, gather_columns(data, all));
  std::size_t hits = 0;
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.rows(); ++i) {
      if (logits(i, j) > logits(best, j)) best = i;
    }
    if (static_cast<int>(best) == data.labels[j]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Per-sample loss and softmax confidence vector for a single example.
struct SampleEval {
  double loss = 0.0;
  std::vector<double> confidence;
};

inline SampleEval evaluate_sample(const LinearModel& model,
                                  const Dataset& data, std::size_t index) {
  DenseMatrix x = gather_columns(data, {index});
  DenseMatrix probs = matmul(model.w, x);
  softmax_columns(probs);
  SampleEval out;
  out.confidence.resize(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i)
    out.confidence[i] = probs(i, 0);
  out.loss = -std::log(std::max(out.confidence[data.labels[index]], 1e-300));
  return out;
}

// Pool purposes; each gets its own stream so pools are independent.
namespace pool {
inline constexpr std::int64_t kTrain = 1;
inline constexpr std::int64_t kTest = 2;
inline constexpr std::int64_t kPretrain = 3;
inline constexpr std::int64_t kAux = 10;
inline constexpr std::int64_t kNonMember = 11;
}  // namespace pool

// Synthetic classification task: Gaussian class clusters in a small latent
// space, lifted to dimension n through a fixed random tanh feature map. The
// base weight is pretrained briefly on a disjoint pool, so adapter
// fine-tuning starts from a sensible but improvable model.
class SyntheticTask {
 public:
  static SyntheticTask generate(const TaskSection& cfg) {
    SyntheticTask task;
    task.cfg_ = cfg;
    RngStream geometry(cfg.seed, {kGeometryLabel});
    RngStream centers_rng = geometry.child({1});
    task.centers_ = gaussian_matrix(cfg.classes, kLatentDim, kCenterScale,
                                    centers_rng);
    RngStream map_rng = geometry.child({2});
    task.feature_map_ = gaussian_matrix(
        cfg.n, kLatentDim, 1.0 / std::sqrt(double(kLatentDim)), map_rng);
    RngStream bias_rng = geometry.child({3});
    task.feature_bias_.resize(cfg.n);
    for (double& v : task.feature_bias_) v = bias_rng.gaussian(0.3);

    Dataset full_train =
        task.sample_pool(cfg.clients * cfg.samples_per_client, pool::kTrain);
    task.clients_.resize(cfg.clients);
    for (std::size_t c = 0; c < cfg.clients; ++c) {
      Dataset& d = task.clients_[c];
      d.features = DenseMatrix(cfg.samples_per_client, cfg.n);
      d.labels.resize(cfg.samples_per_client);
      for (std::size_t i = 0; i < cfg.samples_per_client; ++i) {
        const std::size_t src = c * cfg.samples_per_client + i;
        for (std::size_t k = 0; k < cfg.n; ++k) {
          d.features(i, k) = full_train.features(src, k);
        }
        d.labels[i] = full_train.labels[src];
      }
    }
    task.test_ = task.sample_pool(cfg.test_samples, pool::kTest);
    task.pretrain_base_weight();
    return task;
  }

  const TaskSection& config() const { return cfg_; }
  const DenseMatrix& base_weight() const { return w0_; }
  const std::vector<Dataset>& client_data() const { return clients_; }
  const Dataset& test_set() const { return test_; }

  // Fresh i.i.d. pool for the given purpose, deterministic in (seed, purpose).
  Dataset sample_pool(std::size_t count, std::int64_t purpose) const {
    RngStream rng(cfg_.seed, {kPoolLabel, purpose});
    Dataset d;
    d.features = DenseMatrix(count, cfg_.n);
    d.labels.resize(count);
    std::vector<double> z(kLatentDim);
    for (std::size_t s = 0; s < count; ++s) {
      const int label = static_cast<int>(rng.next_below(cfg_.classes));
      d.labels[s] = label;
      for (std::size_t k = 0; k < kLatentDim; ++k) {
        z[k] = centers_(label, k) + rng.gaussian(1.0);
      }
      for (std::size_t i = 0; i < cfg_.n; ++i) {
        double acc = feature_bias_[i];
        for (std::size_t k = 0; k < kLatentDim; ++k) {
          acc += feature_map_(i, k) * z[k];
        }
        d.features(s, i) = std::tanh(acc);
      }
    }
    return d;
  }

 private:
  static constexpr std::size_t kLatentDim = 8;
  static constexpr double kCenterScale = 1.2;
  static constexpr std::int64_t kGeometryLabel = 101;
  static constexpr std::int64_t kPoolLabel = 102;
  static constexpr std::int64_t kPretrainLabel = 103;
  static constexpr int kPretrainSteps = 12;
  static constexpr std::size_t kPretrainPoolSize = 512;
  static constexpr std::size_t kPretrainBatch = 64;
  static constexpr double kPretrainEta = 0.5;

  // Brief full-weight SGD on a disjoint pool; leaves clear headroom for the
  // federated fine-tuning stage.
  void pretrain_base_weight() {
    Dataset pre = sample_pool(kPretrainPoolSize, pool::kPretrain);
    w0_ = DenseMatrix(cfg_.m, cfg_.n);
    RngStream rng(cfg_.seed, {kPretrainLabel});
    for (int step = 0; step < kPretrainSteps; ++step) {
      const std::vector<std::size_t> idx =
          rng.sample_without_replacement(pre.size(), kPretrainBatch);
      DenseMatrix x = gather_columns(pre, idx);
      DenseMatrix probs = matmul(w0_, x);
      softmax_columns(probs);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        probs(pre.labels[idx[j]], j) -= 1.0;
      }
      DenseMatrix grad = matmul(probs, transpose(x));
      const double scale = kPretrainEta / static_cast<double>(idx.size());
      w0_ = w0_ - scale * grad;
    }
  }

  TaskSection cfg_;
  DenseMatrix w0_;
  DenseMatrix centers_;      // classes x latent
  DenseMatrix feature_map_;  // n x latent
  std::vector<double> feature_bias_;
  std::vector<Dataset> clients_;
  Dataset test_;
};

}  // namespace fedpower

#endif  // FEDPOWER_TASK_HPP_
