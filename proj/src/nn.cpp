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
#include "prompate/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace prompate {

namespace {

Tensor uniform_init(std::vector<size_t> shape, double bound,
                    RandomStream& rng) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Conv2d::Conv2d(int in_ch_, int out_ch_, int kernel_, int stride_, int pad_,
               RandomStream& rng)
    : in_ch(in_ch_), out_ch(out_ch_), kernel(kernel_), stride(stride_),
      pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * kernel * kernel);
  weight = uniform_init({static_cast<size_t>(out_ch), static_cast<size_t>(in_ch),
                         static_cast<size_t>(kernel), static_cast<size_t>(kernel)},
                        bound, rng);
  bias = Tensor({static_cast<size_t>(out_ch)});
}

std::pair<int, int> Conv2d::out_dims(int h, int w) const {
  return {(h + 2 * pad - kernel) / stride + 1,
          (w + 2 * pad - kernel) / stride + 1};
}

Tensor Conv2d::forward(const Tensor& x) const {
  const int h = static_cast<int>(x.dim(1)), w = static_cast<int>(x.dim(2));
  const auto [oh, ow] = out_dims(h, w);
  Tensor y({static_cast<size_t>(out_ch), static_cast<size_t>(oh),
            static_cast<size_t>(ow)});
  const double* xd = x.data();
  double* yd = y.data();
  const double* wd = weight.data();
  for (int oc = 0; oc < out_ch; ++oc) {
    const double* w_oc = wd + static_cast<size_t>(oc) * in_ch * kernel * kernel;
    double* y_oc = yd + static_cast<size_t>(oc) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double v = bias[oc];
        for (int ic = 0; ic < in_ch; ++ic) {
          const double* x_ic = xd + static_cast<size_t>(ic) * h * w;
          const double* w_ic = w_oc + static_cast<size_t>(ic) * kernel * kernel;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const double* x_row = x_ic + static_cast<size_t>(iy) * w;
            const double* w_row = w_ic + static_cast<size_t>(ky) * kernel;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= w) continue;
              v += w_row[kx] * x_row[ix];
            }
          }
        }
        y_oc[oy * ow + ox] = v;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& d_out, Tensor* d_weight,
                        Tensor* d_bias) const {
  const int h = static_cast<int>(x.dim(1)), w = static_cast<int>(x.dim(2));
  const int oh = static_cast<int>(d_out.dim(1)), ow = static_cast<int>(d_out.dim(2));
  Tensor dx(x.shape());
  const double* xd = x.data();
  const double* gd = d_out.data();
  const double* wd = weight.data();
  double* dxd = dx.data();
  for (int oc = 0; oc < out_ch; ++oc) {
    const size_t oc_base = static_cast<size_t>(oc) * in_ch * kernel * kernel;
    const double* w_oc = wd + oc_base;
    double* dw_oc = d_weight ? d_weight->data() + oc_base : nullptr;
    const double* g_oc = gd + static_cast<size_t>(oc) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = g_oc[oy * ow + ox];
        if (d_bias) (*d_bias)[oc] += g;
        for (int ic = 0; ic < in_ch; ++ic) {
          const double* x_ic = xd + static_cast<size_t>(ic) * h * w;
          double* dx_ic = dxd + static_cast<size_t>(ic) * h * w;
          const size_t ic_off = static_cast<size_t>(ic) * kernel * kernel;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const size_t row_off = ic_off + static_cast<size_t>(ky) * kernel;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= w) continue;
              if (dw_oc) dw_oc[row_off + kx] += g * x_ic[iy * w + ix];
              dx_ic[iy * w + ix] += g * w_oc[row_off + kx];
            }
          }
        }
      }
    }
  }
  return dx;
}

Linear::Linear(int in, int out, RandomStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = uniform_init({static_cast<size_t>(out), static_cast<size_t>(in)},
                        bound, rng);
  bias = Tensor({static_cast<size_t>(out)});
}

Tensor Linear::forward(const Tensor& x) const {
  const size_t out = weight.dim(0), in = weight.dim(1);
  Tensor y({out});
  for (size_t o = 0; o < out; ++o) {
    double v = bias[o];
    for (size_t i = 0; i < in; ++i) v += weight.at2(o, i) * x[i];
    y[o] = v;
  }
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& d_out, Tensor* d_weight,
                        Tensor* d_bias) const {
  const size_t out = weight.dim(0), in = weight.dim(1);
  Tensor dx(x.shape());
  for (size_t o = 0; o < out; ++o) {
    const double g = d_out[o];
    if (d_bias) (*d_bias)[o] += g;
    for (size_t i = 0; i < in; ++i) {
      if (d_weight) d_weight->at2(o, i) += g * x[i];
      dx[i] += g * weight.at2(o, i);
    }
  }
  return dx;
}

SourceNet::SourceNet(ArchSpec arch, uint64_t seed) : arch_(std::move(arch)) {
  if (arch_.conv_channels.empty()) {
    throw std::invalid_argument("arch needs at least one conv block");
  }
  RandomStream rng(derive_seed(seed, "net-init", 0));
  int ch = arch_.in_channels;
  int h = arch_.in_h, w = arch_.in_w;
  for (int oc : arch_.conv_channels) {
    convs_.emplace_back(ch, oc, arch_.kernel, arch_.stride, arch_.pad, rng);
    const auto [oh, ow] = convs_.back().out_dims(h, w);
    if (oh < 1 || ow < 1) throw std::invalid_argument("arch collapses spatial dims");
    ch = oc;
    h = oh;
    w = ow;
  }
  head_ = Linear(ch * h * w, arch_.num_classes, rng);
}

size_t SourceNet::feature_dim() const { return head_.weight.dim(1); }

Tensor SourceNet::forward(const Tensor& x, Cache* cache) const {
  if (x.rank() != 3 || static_cast<int>(x.dim(0)) != arch_.in_channels ||
      static_cast<int>(x.dim(1)) != arch_.in_h ||
      static_cast<int>(x.dim(2)) != arch_.in_w) {
    throw std::invalid_argument("input shape does not match architecture");
  }
  if (cache) {
    cache->input = x;
    cache->conv_in.clear();
    cache->conv_pre.clear();
  }
  Tensor cur = x;
  for (const Conv2d& conv : convs_) {
    if (cache) cache->conv_in.push_back(cur);
    Tensor pre = conv.forward(cur);
    if (cache) cache->conv_pre.push_back(pre);
    for (size_t i = 0; i < pre.size(); ++i) pre[i] = std::max(0.0, pre[i]);
    cur = std::move(pre);
  }
  Tensor flat({cur.size()}, cur.values());
  if (cache) cache->flat = flat;
  return head_.forward(flat);
}

Tensor SourceNet::logits(const Tensor& x) const { return forward(x, nullptr); }

Tensor SourceNet::features(const Tensor& x) const {
  Tensor cur = x;
  for (const Conv2d& conv : convs_) {
    Tensor pre = conv.forward(cur);
    for (size_t i = 0; i < pre.size(); ++i) pre[i] = std::max(0.0, pre[i]);
    cur = std::move(pre);
  }
  return Tensor({cur.size()}, cur.values());
}

Tensor SourceNet::backward(const Cache& cache, const Tensor& d_logits,
                           std::vector<Tensor>* param_grads) const {
  // param_grads layout: [conv0.w, conv0.b, ..., head.w, head.b].
  Tensor* head_dw = nullptr;
  Tensor* head_db = nullptr;
  if (param_grads) {
    head_dw = &(*param_grads)[2 * convs_.size()];
    head_db = &(*param_grads)[2 * convs_.size() + 1];
  }
  Tensor d_flat = head_.backward(cache.flat, d_logits, head_dw, head_db);

  Tensor d_cur(cache.conv_pre.back().shape(), d_flat.values());
  for (size_t li = convs_.size(); li-- > 0;) {
    const Tensor& pre = cache.conv_pre[li];
    for (size_t i = 0; i < d_cur.size(); ++i) {
      if (pre[i] <= 0.0) d_cur[i] = 0.0;
    }
    Tensor* dw = param_grads ? &(*param_grads)[2 * li] : nullptr;
    Tensor* db = param_grads ? &(*param_grads)[2 * li + 1] : nullptr;
    d_cur = convs_[li].backward(cache.conv_in[li], d_cur, dw, db);
  }
  return d_cur;
}

std::vector<Tensor*> SourceNet::params() {
  std::vector<Tensor*> out;
  for (Conv2d& c : convs_) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  return out;
}

std::vector<const Tensor*> SourceNet::params() const {
  std::vector<const Tensor*> out;
  for (const Conv2d& c : convs_) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  return out;
}

uint64_t net_fingerprint(const SourceNet& net) {
  uint64_t h = hash_string("source-net-v1");
  for (const Tensor* t : net.params()) h = fingerprint(*t, h);
  return h;
}

FrozenSourceModel::FrozenSourceModel(SourceNet net, double source_test_accuracy)
    : net_(std::move(net)),
      fingerprint_(net_fingerprint(net_)),
      source_test_accuracy_(source_test_accuracy) {}

uint64_t FrozenSourceModel::recompute_fingerprint() const {
  return net_fingerprint(net_);
}

void FrozenSourceModel::assert_unchanged() const {
  if (recompute_fingerprint() != fingerprint_) {
    throw FrozenModelMutated("frozen source model parameters changed");
  }
}

void TrainConfig::validate() const {
  if (workers < 1) throw std::invalid_argument("train workers must be >= 1");
  if (lr < 0.0) throw std::invalid_argument("lr must be >= 0");
  if (!(lr_decay_per_epoch > 0.0) || lr_decay_per_epoch > 1.0) {
    throw std::invalid_argument("lr_decay_per_epoch must lie in (0, 1]");
  }
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (!(eps_hat > 0.0)) throw std::invalid_argument("adam stabilizer must be > 0");
}

void StudentConfig::validate() const {
  train.validate();
  if (pseudo_label_rounds < 0) {
    throw std::invalid_argument("pseudo_label_rounds must be >= 0");
  }
  if (!(confidence_threshold > 0.0) || confidence_threshold > 1.0) {
    throw std::invalid_argument("confidence_threshold must lie in (0, 1]");
  }
}

Adam::Adam(std::vector<Tensor*> params, double beta1, double beta2,
           double eps_hat)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps_hat) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step(const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != params_.size()) {
    throw std::invalid_argument("adam grads do not match parameter list");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor& theta = *params_[p];
    const Tensor& g = grads[p];
    for (size_t i = 0; i < theta.size(); ++i) {
      m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
      v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m_[p][i] / bc1;
      const double vhat = v_[p][i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double cross_entropy(const Tensor& probs, int label) {
  if (label < 0 || static_cast<size_t>(label) >= probs.size()) {
    throw std::invalid_argument("label out of range");
  }
  return -std::log(std::max(probs[label], 1e-300));
}

Tensor ce_score_grad(const Tensor& probs, int label) {
  Tensor g = probs;
  g[label] -= 1.0;
  return g;
}

ReTeacher::ReTeacher(const FrozenSourceModel* source, PromptSpec spec,
                     MapKind kind, int target_classes, uint64_t seed)
    : source_(source), spec_(spec), target_classes_(target_classes) {
  if (!source_) throw std::invalid_argument("re-teacher needs a source model");
  spec_.validate();
  if (spec_.channels != source_->arch().in_channels ||
      spec_.height != source_->arch().in_h ||
      spec_.width != source_->arch().in_w) {
    throw std::invalid_argument("prompt spec does not match source input dims");
  }
  RandomStream rng(derive_seed(seed, "prompt-init", 0));
  params_ = make_prompt_params(spec_, kind, source_->num_classes(),
                               target_classes, rng);
}

Tensor ReTeacher::probs(const Tensor& x_t) const {
  const Tensor prompted = apply_prompt(x_t, params_, spec_);
  return map_labels(source_->logits(prompted), params_.label_map);
}

int ReTeacher::predict(const Tensor& x_t) const { return probs(x_t).argmax(); }

std::vector<Tensor*> ReTeacher::trainable_params() {
  std::vector<Tensor*> out{&params_.omega1};
  for (Tensor* t : label_map_params(params_.label_map)) out.push_back(t);
  return out;
}

double ReTeacher::example_grads(const Tensor& x_t, int label,
                                std::vector<Tensor>& grads) {
  const Tensor prompted = apply_prompt(x_t, params_, spec_);
  SourceNet::Cache cache;
  const Tensor source_logits = source_->forward(prompted, &cache);
  MapCache map_cache;
  const Tensor probs =
      map_labels_forward(source_logits, params_.label_map, map_cache);
  const double loss = cross_entropy(probs, label);

  const Tensor d_scores = ce_score_grad(probs, label);
  MapBackward map_bwd =
      map_labels_backward(params_.label_map, map_cache, d_scores);
  const Tensor d_prompted =
      source_->input_gradient(cache, map_bwd.d_source_logits);
  grads[0].add_scaled(omega1_grad(d_prompted, spec_), 1.0);
  for (size_t i = 0; i < map_bwd.param_grads.size(); ++i) {
    grads[1 + i].add_scaled(map_bwd.param_grads[i], 1.0);
  }
  return loss;
}

ScratchModel::ScratchModel(ArchSpec arch, uint64_t seed)
    : net_(std::move(arch), seed) {}

Tensor ScratchModel::probs(const Tensor& x) const {
  return softmax(net_.logits(x));
}

int ScratchModel::predict(const Tensor& x) const { return probs(x).argmax(); }

std::vector<Tensor*> ScratchModel::trainable_params() { return net_.params(); }

double ScratchModel::example_grads(const Tensor& x, int label,
                                   std::vector<Tensor>& grads) {
  SourceNet::Cache cache;
  const Tensor logits = net_.forward(x, &cache);
  const Tensor probs = softmax(logits);
  const double loss = cross_entropy(probs, label);
  net_.backward(cache, ce_score_grad(probs, label), &grads);
  return loss;
}

HeadTunedModel::HeadTunedModel(const FrozenSourceModel* source,
                               int target_classes, uint64_t seed)
    : source_(source) {
  if (!source_) throw std::invalid_argument("head-tuned model needs a source");
  RandomStream rng(derive_seed(seed, "head-init", 0));
  head_ = Linear(static_cast<int>(source_->feature_dim()), target_classes, rng);
}

Tensor HeadTunedModel::features(const Tensor& x_t) const {
  const auto& arch = source_->arch();
  if (static_cast<int>(x_t.dim(0)) != arch.in_channels) {
    throw std::invalid_argument("target channel count must match source");
  }
  Tensor resized = resize_bilinear(x_t, arch.in_h, arch.in_w);
  return source_->features(resized);
}

Tensor HeadTunedModel::probs(const Tensor& x_t) const {
  return softmax(head_.forward(features(x_t)));
}

int HeadTunedModel::predict(const Tensor& x_t) const {
  return probs(x_t).argmax();
}

std::vector<Tensor*> HeadTunedModel::trainable_params() {
  return {&head_.weight, &head_.bias};
}

double HeadTunedModel::example_grads(const Tensor& x_t, int label,
                                     std::vector<Tensor>& grads) {
  const Tensor feats = features(x_t);
  const Tensor probs = softmax(head_.forward(feats));
  const double loss = cross_entropy(probs, label);
  head_.backward(feats, ce_score_grad(probs, label), &grads[0], &grads[1]);
  return loss;
}

FrozenSourceModel train_source(const Dataset& source_dataset,
                               const ArchSpec& arch, const TrainConfig& cfg) {
  source_dataset.validate();
  if (source_dataset.size() == 0) {
    throw std::invalid_argument("source dataset is empty");
  }
  if (source_dataset.num_classes != arch.num_classes) {
    throw std::invalid_argument("source dataset class count must match arch");
  }
  const size_t n = source_dataset.size();
  const size_t n_eval = std::max<size_t>(1, n / 10);
  const size_t n_train = n - n_eval;
  if (n_train == 0) throw std::invalid_argument("source dataset too small");

  std::vector<Tensor> xs;
  xs.reserve(n);
  for (size_t i = 0; i < n; ++i) xs.push_back(source_dataset.image(i));
  const std::vector<Tensor> train_xs(xs.begin(), xs.begin() + n_train);
  const std::vector<int> train_ys(source_dataset.labels.begin(),
                                  source_dataset.labels.begin() + n_train);

  ScratchModel model(arch, derive_seed(cfg.seed, "source-model", 0));
  fit(model, train_xs, train_ys, cfg);

  size_t correct = 0;
  for (size_t i = n_train; i < n; ++i) {
    if (model.predict(xs[i]) == source_dataset.labels[i]) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(n_eval);
  return FrozenSourceModel(std::move(model).take_net(), acc);
}

ReTeacher train_reteacher(const std::vector<Tensor>& xs,
                          const std::vector<int>& ys,
                          const FrozenSourceModel& source,
                          const PromptSpec& spec, MapKind kind,
                          int target_classes, const TrainConfig& cfg) {
  if (xs.empty()) throw std::invalid_argument("re-teacher slice is empty");
  for (int y : ys) {
    if (y < 0 || y >= target_classes) {
      throw std::invalid_argument("slice label out of target range");
    }
  }
  ReTeacher teacher(&source, spec, kind, target_classes, cfg.seed);
  fit(teacher, xs, ys, cfg);
  source.assert_unchanged();
  return teacher;
}

ScratchModel train_scratch_classifier(const std::vector<Tensor>& xs,
                                      const std::vector<int>& ys,
                                      const ArchSpec& arch,
                                      const TrainConfig& cfg) {
  if (xs.empty()) throw std::invalid_argument("training slice is empty");
  ScratchModel model(arch, derive_seed(cfg.seed, "scratch-init", 0));
  fit(model, xs, ys, cfg);
  return model;
}

HeadTunedModel train_head_tuned(const std::vector<Tensor>& xs,
                                const std::vector<int>& ys,
                                const FrozenSourceModel& source,
                                int target_classes, const TrainConfig& cfg) {
  if (xs.empty()) throw std::invalid_argument("training slice is empty");
  HeadTunedModel model(&source, target_classes, cfg.seed);
  fit(model, xs, ys, cfg);
  source.assert_unchanged();
  return model;
}

ReTeacher train_student(const std::vector<Tensor>& answered_xs,
                        const std::vector<int>& noisy_labels,
                        const std::vector<Tensor>& unlabeled,
                        const FrozenSourceModel& source, const PromptSpec& spec,
                        MapKind kind, int target_classes,
                        const StudentConfig& cfg) {
  auto factory = [&] {
    return ReTeacher(&source, spec, kind, target_classes, cfg.train.seed);
  };
  ReTeacher student = train_with_pseudo_labels<ReTeacher>(
      factory, answered_xs, noisy_labels, unlabeled, cfg);
  source.assert_unchanged();
  return student;
}

ScratchModel train_scratch_student(const std::vector<Tensor>& answered_xs,
                                   const std::vector<int>& noisy_labels,
                                   const std::vector<Tensor>& unlabeled,
                                   const ArchSpec& arch,
                                   const StudentConfig& cfg) {
  auto factory = [&] {
    return ScratchModel(arch, derive_seed(cfg.train.seed, "scratch-init", 0));
  };
  return train_with_pseudo_labels<ScratchModel>(factory, answered_xs,
                                                noisy_labels, unlabeled, cfg);
}

double evaluate_examples(const std::function<int(const Tensor&)>& predict,
                         const std::vector<Tensor>& xs,
                         const std::vector<int>& ys) {
  if (xs.empty()) throw std::invalid_argument("evaluation set is empty");
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("evaluation labels length mismatch");
  }
  size_t correct = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (predict(xs[i]) == ys[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xs.size());
}

double evaluate(const std::function<int(const Tensor&)>& predict,
                const Dataset& test) {
  if (test.split != Split::kTest) {
    throw std::invalid_argument("evaluate requires the test split");
  }
  return evaluate_examples(predict, make_examples(test), test.labels);
}

std::vector<Tensor> make_examples(const Dataset& ds) {
  std::vector<Tensor> xs;
  xs.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) xs.push_back(ds.image(i));
  return xs;
}

std::vector<Tensor> gather_examples(const Dataset& ds,
                                    const std::vector<size_t>& indices) {
  std::vector<Tensor> xs;
  xs.reserve(indices.size());
  for (size_t i : indices) xs.push_back(ds.image(i));
  return xs;
}

std::vector<int> gather_labels(const std::vector<int>& labels,
                               const std::vector<size_t>& indices) {
  std::vector<int> ys;
  ys.reserve(indices.size());
  for (size_t i : indices) ys.push_back(labels[i]);
  return ys;
}

}  // namespace prompate
