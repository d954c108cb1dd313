// Copyright 2026 the prompate authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "prompate/data.hpp"
#include "prompate/parallel.hpp"
#include "prompate/prompt.hpp"
#include "prompate/rng.hpp"
#include "prompate/tensor.hpp"

namespace prompate {

// Small convolutional classifier: conv blocks (3x3, stride 2, rectifier)
// followed by an affine head.
struct ArchSpec {
  int in_channels = 1;
  int in_h = 32;
  int in_w = 32;
  std::vector<int> conv_channels = {8, 16};
  int kernel = 3;
  int stride = 2;
  int pad = 1;
  int num_classes = 26;
};

struct Conv2d {
  int in_ch, out_ch, kernel, stride, pad;
  Tensor weight;  // out_ch x in_ch x k x k
  Tensor bias;    // out_ch

  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad,
         RandomStream& rng);
  std::pair<int, int> out_dims(int h, int w) const;
  Tensor forward(const Tensor& x) const;
  // Returns d(input); accumulates weight/bias grads when the sinks are set.
  Tensor backward(const Tensor& x, const Tensor& d_out, Tensor* d_weight,
                  Tensor* d_bias) const;
};

struct Linear {
  Tensor weight;  // out x in
  Tensor bias;    // out

  Linear() = default;
  Linear(int in, int out, RandomStream& rng);
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& d_out, Tensor* d_weight,
                  Tensor* d_bias) const;
};

class SourceNet {
 public:
  SourceNet(ArchSpec arch, uint64_t seed);

  struct Cache {
    Tensor input;
    std::vector<Tensor> conv_in;   // input to each conv
    std::vector<Tensor> conv_pre;  // conv output before the rectifier
    Tensor flat;                   // flattened features fed to the head
  };

  const ArchSpec& arch() const { return arch_; }
  int num_classes() const { return arch_.num_classes; }
  size_t feature_dim() const;

  Tensor logits(const Tensor& x) const;
  Tensor forward(const Tensor& x, Cache* cache) const;
  // d(input) from d(logits); accumulates into param_grads when non-null.
  Tensor backward(const Cache& cache, const Tensor& d_logits,
                  std::vector<Tensor>* param_grads) const;
  Tensor features(const Tensor& x) const;

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;

 private:
  ArchSpec arch_;
  std::vector<Conv2d> convs_;
  Linear head_;
};

// Internal assertion: a frozen model's parameters changed.
class FrozenModelMutated : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Immutable classifier shared by every re-teacher and the student. The
// fingerprint covers all parameter bytes and must survive any amount of
// forward/backward traffic.
class FrozenSourceModel {
 public:
  FrozenSourceModel(SourceNet net, double source_test_accuracy);

  uint64_t fingerprint() const { return fingerprint_; }
  uint64_t recompute_fingerprint() const;
  void assert_unchanged() const;

  double source_test_accuracy() const { return source_test_accuracy_; }
  const ArchSpec& arch() const { return net_.arch(); }
  int num_classes() const { return net_.num_classes(); }
  size_t feature_dim() const { return net_.feature_dim(); }

  Tensor logits(const Tensor& x) const { return net_.logits(x); }
  Tensor forward(const Tensor& x, SourceNet::Cache* cache) const {
    return net_.forward(x, cache);
  }
  // Input gradient only; parameter gradients are never formed.
  Tensor input_gradient(const SourceNet::Cache& cache,
                        const Tensor& d_logits) const {
    return net_.backward(cache, d_logits, nullptr);
  }
  Tensor features(const Tensor& x) const { return net_.features(x); }
  const SourceNet& net() const { return net_; }

 private:
  SourceNet net_;
  uint64_t fingerprint_;
  double source_test_accuracy_;
};

uint64_t net_fingerprint(const SourceNet& net);

struct TrainConfig {
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  double lr_decay_per_epoch = 0.7;
  int batch_size = 16;
  int epochs = 10;
  uint64_t seed = 0;
  // Batch-internal fan-out; per-example gradients reduce in index order, so
  // results are bitwise identical for any worker count.
  int workers = 1;

  void validate() const;
};

struct StudentConfig {
  TrainConfig train;
  int pseudo_label_rounds = 2;
  double confidence_threshold = 0.95;

  void validate() const;
};

class Adam {
 public:
  Adam(std::vector<Tensor*> params, double beta1, double beta2,
       double eps_hat);
  void step(const std::vector<Tensor>& grads, double lr);

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

double cross_entropy(const Tensor& probs, int label);
// Gradient of mean CE at the pre-softmax scores: probs - onehot(label).
Tensor ce_score_grad(const Tensor& probs, int label);

// Visual-prompt classifier over the shared frozen source: the only trainable
// state is omega1 plus the label-map parameters.
class ReTeacher {
 public:
  ReTeacher(const FrozenSourceModel* source, PromptSpec spec, MapKind kind,
            int target_classes, uint64_t seed);

  Tensor probs(const Tensor& x_t) const;
  int predict(const Tensor& x_t) const;
  std::vector<Tensor*> trainable_params();
  double example_grads(const Tensor& x_t, int label,
                       std::vector<Tensor>& grads);

  const PromptParams& prompt_params() const { return params_; }
  const PromptSpec& spec() const { return spec_; }
  const FrozenSourceModel& source() const { return *source_; }
  int target_classes() const { return target_classes_; }

 private:
  const FrozenSourceModel* source_;
  PromptSpec spec_;
  int target_classes_;
  PromptParams params_;
};

// Plain classifier trained end to end; also the network behind train_source.
class ScratchModel {
 public:
  ScratchModel(ArchSpec arch, uint64_t seed);

  Tensor probs(const Tensor& x) const;
  int predict(const Tensor& x) const;
  std::vector<Tensor*> trainable_params();
  double example_grads(const Tensor& x, int label, std::vector<Tensor>& grads);

  const SourceNet& net() const { return net_; }
  SourceNet&& take_net() && { return std::move(net_); }

 private:
  SourceNet net_;
};

// Frozen conv features of the source plus a fresh trainable head; the
// partial-fine-tune teacher variant.
class HeadTunedModel {
 public:
  HeadTunedModel(const FrozenSourceModel* source, int target_classes,
                 uint64_t seed);

  Tensor probs(const Tensor& x_t) const;
  int predict(const Tensor& x_t) const;
  std::vector<Tensor*> trainable_params();
  double example_grads(const Tensor& x_t, int label,
                       std::vector<Tensor>& grads);

 private:
  Tensor features(const Tensor& x_t) const;

  const FrozenSourceModel* source_;
  Linear head_;
};

struct FitResult {
  std::vector<double> epoch_losses;  // full-set mean loss after each epoch
};

// Minibatch Adam with per-epoch reshuffling and learning-rate decay.
// Deterministic in cfg.seed for any worker count.
template <class M>
FitResult fit(M& model, const std::vector<Tensor>& xs,
              const std::vector<int>& ys, const TrainConfig& cfg) {
  cfg.validate();
  if (xs.empty()) throw std::invalid_argument("training set must be non-empty");
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("training labels length mismatch");
  }

  std::vector<Tensor*> params = model.trainable_params();
  Adam opt(params, cfg.beta1, cfg.beta2, cfg.eps_hat);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Tensor* p : params) grads.emplace_back(p->shape());

  const size_t batch = static_cast<size_t>(cfg.batch_size);
  const bool fan_out = cfg.workers > 1 && batch > 1;
  // Per-example gradient buffers for the parallel path; reduced in index
  // order so the sum is independent of scheduling.
  std::vector<std::vector<Tensor>> slot_grads;
  if (fan_out) {
    slot_grads.resize(batch);
    for (auto& slot : slot_grads) {
      slot.reserve(params.size());
      for (Tensor* p : params) slot.emplace_back(p->shape());
    }
  }

  RandomStream shuffle_rng(derive_seed(cfg.seed, "fit-shuffle", 0));
  std::vector<size_t> order(xs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  FitResult result;
  double lr = cfg.lr;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      for (Tensor& g : grads) g.fill(0.0);
      if (fan_out) {
        parallel_for(end - start, cfg.workers, [&](size_t k) {
          for (Tensor& g : slot_grads[k]) g.fill(0.0);
          model.example_grads(xs[order[start + k]], ys[order[start + k]],
                              slot_grads[k]);
        });
        for (size_t k = 0; k < end - start; ++k) {
          for (size_t t = 0; t < grads.size(); ++t) {
            grads[t].add_scaled(slot_grads[k][t], 1.0);
          }
        }
      } else {
        for (size_t i = start; i < end; ++i) {
          model.example_grads(xs[order[i]], ys[order[i]], grads);
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (Tensor& g : grads) {
        for (size_t i = 0; i < g.size(); ++i) g[i] *= inv;
      }
      opt.step(grads, lr);
    }
    lr *= cfg.lr_decay_per_epoch;

    double loss = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
      loss += cross_entropy(model.probs(xs[i]), ys[i]);
    }
    result.epoch_losses.push_back(loss / static_cast<double>(xs.size()));
  }
  return result;
}

// Trains the source classifier on all but the held-out tail (one tenth,
// at least one example) and records accuracy on that tail.
FrozenSourceModel train_source(const Dataset& source_dataset,
                               const ArchSpec& arch, const TrainConfig& cfg);

ReTeacher train_reteacher(const std::vector<Tensor>& xs,
                          const std::vector<int>& ys,
                          const FrozenSourceModel& source,
                          const PromptSpec& spec, MapKind kind,
                          int target_classes, const TrainConfig& cfg);

ScratchModel train_scratch_classifier(const std::vector<Tensor>& xs,
                                      const std::vector<int>& ys,
                                      const ArchSpec& arch,
                                      const TrainConfig& cfg);

HeadTunedModel train_head_tuned(const std::vector<Tensor>& xs,
                                const std::vector<int>& ys,
                                const FrozenSourceModel& source,
                                int target_classes, const TrainConfig& cfg);

// Round 0 trains on the answered pairs; each pseudo-label round predicts the
// unlabeled pool, keeps predictions at or above the confidence threshold,
// and retrains from the same initialization on the union.
template <class M, class Factory>
M train_with_pseudo_labels(Factory make_model, const std::vector<Tensor>& xs,
                           const std::vector<int>& ys,
                           const std::vector<Tensor>& unlabeled,
                           const StudentConfig& cfg) {
  cfg.validate();
  if (xs.empty()) throw std::invalid_argument("no answered queries to train on");

  M model = make_model();
  fit(model, xs, ys, cfg.train);

  for (int round = 0; round < cfg.pseudo_label_rounds; ++round) {
    std::vector<Tensor> extra_xs;
    std::vector<int> extra_ys;
    for (const Tensor& x : unlabeled) {
      const Tensor p = model.probs(x);
      const int k = p.argmax();
      if (p[k] >= cfg.confidence_threshold) {
        extra_xs.push_back(x);
        extra_ys.push_back(k);
      }
    }
    if (extra_xs.empty()) break;
    std::vector<Tensor> union_xs = xs;
    std::vector<int> union_ys = ys;
    union_xs.insert(union_xs.end(), extra_xs.begin(), extra_xs.end());
    union_ys.insert(union_ys.end(), extra_ys.begin(), extra_ys.end());
    model = make_model();
    fit(model, union_xs, union_ys, cfg.train);
  }
  return model;
}

ReTeacher train_student(const std::vector<Tensor>& answered_xs,
                        const std::vector<int>& noisy_labels,
                        const std::vector<Tensor>& unlabeled,
                        const FrozenSourceModel& source, const PromptSpec& spec,
                        MapKind kind, int target_classes,
                        const StudentConfig& cfg);

ScratchModel train_scratch_student(const std::vector<Tensor>& answered_xs,
                                   const std::vector<int>& noisy_labels,
                                   const std::vector<Tensor>& unlabeled,
                                   const ArchSpec& arch,
                                   const StudentConfig& cfg);

double evaluate_examples(const std::function<int(const Tensor&)>& predict,
                         const std::vector<Tensor>& xs,
                         const std::vector<int>& ys);

// Accuracy on the held-out split; rejects datasets not tagged as test data.
double evaluate(const std::function<int(const Tensor&)>& predict,
                const Dataset& test);

std::vector<Tensor> make_examples(const Dataset& ds);
std::vector<Tensor> gather_examples(const Dataset& ds,
                                    const std::vector<size_t>& indices);
std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<size_t>& indices);

}  // namespace prompate
