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
#include "prompate/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace prompate {

namespace {

Tensor uniform_tensor(std::vector<size_t> shape, double lo, double hi,
                      RandomStream& rng) {
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor fc_init(size_t rows, size_t cols, RandomStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  return uniform_tensor({rows, cols}, -bound, bound, rng);
}

}  // namespace

void PromptSpec::validate() const {
  if (channels < 1 || height < 1 || width < 1) {
    throw std::invalid_argument("prompt spec dims must be positive");
  }
  if (rescale_h < 1 || rescale_w < 1) {
    throw std::invalid_argument("prompt rescale dims must be positive");
  }
  if (rescale_h > height || rescale_w > width) {
    throw std::invalid_argument("prompt rescale exceeds source dims");
  }
}

std::string to_string(MapKind k) {
  switch (k) {
    case MapKind::kRandom: return "random";
    case MapKind::kFc1: return "fc1";
    case MapKind::kFc2: return "fc2";
  }
  return "?";
}

MapKind map_kind_from_string(const std::string& s) {
  if (s == "random") return MapKind::kRandom;
  if (s == "fc1") return MapKind::kFc1;
  if (s == "fc2") return MapKind::kFc2;
  throw std::invalid_argument("unknown map kind: " + s);
}

MapKind map_kind(const LabelMap& map) {
  if (std::holds_alternative<RandomMap>(map)) return MapKind::kRandom;
  if (std::holds_alternative<Fc1Map>(map)) return MapKind::kFc1;
  return MapKind::kFc2;
}

int map_target_classes(const LabelMap& map) {
  if (const auto* r = std::get_if<RandomMap>(&map)) {
    return static_cast<int>(r->target_to_source.size());
  }
  if (const auto* f = std::get_if<Fc1Map>(&map)) {
    return static_cast<int>(f->weight.dim(0));
  }
  return static_cast<int>(std::get<Fc2Map>(map).w2.dim(0));
}

LabelMap make_label_map(MapKind kind, int source_classes, int target_classes,
                        RandomStream& rng) {
  if (target_classes < 2 || source_classes < target_classes) {
    throw std::invalid_argument("label map needs 2 <= K_T <= K_S");
  }
  switch (kind) {
    case MapKind::kRandom: {
      // Uniform injective sample: partial Fisher-Yates over source indices.
      std::vector<int> all(source_classes);
      for (int i = 0; i < source_classes; ++i) all[i] = i;
      RandomMap m;
      m.target_to_source.resize(target_classes);
      for (int k = 0; k < target_classes; ++k) {
        const size_t j = k + rng.uniform_index(source_classes - k);
        std::swap(all[k], all[j]);
        m.target_to_source[k] = all[k];
      }
      return m;
    }
    case MapKind::kFc1: {
      Fc1Map m;
      m.weight = fc_init(target_classes, source_classes, rng);
      m.bias = Tensor({static_cast<size_t>(target_classes)});
      return m;
    }
    case MapKind::kFc2: {
      const int hidden = (source_classes + 1) / 2;
      Fc2Map m;
      m.w1 = fc_init(hidden, source_classes, rng);
      m.b1 = Tensor({static_cast<size_t>(hidden)});
      m.w2 = fc_init(target_classes, hidden, rng);
      m.b2 = Tensor({static_cast<size_t>(target_classes)});
      return m;
    }
  }
  throw std::invalid_argument("unknown map kind");
}

PromptParams make_prompt_params(const PromptSpec& spec, MapKind kind,
                                int source_classes, int target_classes,
                                RandomStream& rng) {
  spec.validate();
  PromptParams p;
  p.omega1 = uniform_tensor({static_cast<size_t>(spec.channels),
                             static_cast<size_t>(spec.height),
                             static_cast<size_t>(spec.width)},
                            -0.03, 0.03, rng);
  p.label_map = make_label_map(kind, source_classes, target_classes, rng);
  return p;
}

Tensor build_mask(const PromptSpec& spec) {
  spec.validate();
  Tensor mask = Tensor::full({static_cast<size_t>(spec.channels),
                              static_cast<size_t>(spec.height),
                              static_cast<size_t>(spec.width)},
                             1.0);
  if (!spec.masked) return mask;
  const int top = spec.top_offset(), left = spec.left_offset();
  for (int c = 0; c < spec.channels; ++c) {
    for (int y = top; y < top + spec.rescale_h; ++y) {
      for (int x = left; x < left + spec.rescale_w; ++x) {
        mask.at3(c, y, x) = 0.0;
      }
    }
  }
  return mask;
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  if (img.rank() != 3) throw std::invalid_argument("resize expects C x H x W");
  const int c = static_cast<int>(img.dim(0));
  const int in_h = static_cast<int>(img.dim(1));
  const int in_w = static_cast<int>(img.dim(2));
  Tensor out({static_cast<size_t>(c), static_cast<size_t>(out_h),
              static_cast<size_t>(out_w)});
  auto clamp_idx = [](int v, int hi) { return std::clamp(v, 0, hi); };
  for (int oy = 0; oy < out_h; ++oy) {
    const double sy = (oy + 0.5) * in_h / out_h - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    const int ya = clamp_idx(y0, in_h - 1), yb = clamp_idx(y0 + 1, in_h - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = (ox + 0.5) * in_w / out_w - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      const int xa = clamp_idx(x0, in_w - 1), xb = clamp_idx(x0 + 1, in_w - 1);
      for (int ch = 0; ch < c; ++ch) {
        const double top =
            (1.0 - fx) * img.at3(ch, ya, xa) + fx * img.at3(ch, ya, xb);
        const double bot =
            (1.0 - fx) * img.at3(ch, yb, xa) + fx * img.at3(ch, yb, xb);
        out.at3(ch, oy, ox) = (1.0 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

Tensor embed_target(const Tensor& x_t, const PromptSpec& spec) {
  spec.validate();
  if (x_t.rank() != 3 || static_cast<int>(x_t.dim(0)) != spec.channels) {
    throw std::invalid_argument("target channel count must match source");
  }
  const Tensor resized = resize_bilinear(x_t, spec.rescale_h, spec.rescale_w);
  Tensor out({static_cast<size_t>(spec.channels),
              static_cast<size_t>(spec.height),
              static_cast<size_t>(spec.width)});
  const int top = spec.top_offset(), left = spec.left_offset();
  for (int c = 0; c < spec.channels; ++c) {
    for (int y = 0; y < spec.rescale_h; ++y) {
      for (int x = 0; x < spec.rescale_w; ++x) {
        out.at3(c, top + y, left + x) = resized.at3(c, y, x);
      }
    }
  }
  return out;
}

Tensor apply_prompt(const Tensor& x_t, const PromptParams& params,
                    const PromptSpec& spec) {
  const Tensor embedded = embed_target(x_t, spec);
  if (!params.omega1.same_shape(embedded)) {
    throw std::invalid_argument("omega1 shape does not match prompt spec");
  }
  Tensor out = embedded;
  if (spec.masked) {
    // Pixel partition: copy values, never blend, so both regions are bitwise.
    const int top = spec.top_offset(), left = spec.left_offset();
    for (int c = 0; c < spec.channels; ++c) {
      for (int y = 0; y < spec.height; ++y) {
        const bool in_rows = y >= top && y < top + spec.rescale_h;
        for (int x = 0; x < spec.width; ++x) {
          const bool inside = in_rows && x >= left && x < left + spec.rescale_w;
          if (!inside) out.at3(c, y, x) = params.omega1.at3(c, y, x);
        }
      }
    }
  } else {
    out.add_scaled(params.omega1, 1.0);
  }
  return out;
}

Tensor omega1_grad(const Tensor& d_prompted, const PromptSpec& spec) {
  if (!spec.masked) return d_prompted;
  Tensor grad = d_prompted;
  const int top = spec.top_offset(), left = spec.left_offset();
  for (int c = 0; c < spec.channels; ++c) {
    for (int y = top; y < top + spec.rescale_h; ++y) {
      for (int x = left; x < left + spec.rescale_w; ++x) {
        grad.at3(c, y, x) = 0.0;
      }
    }
  }
  return grad;
}

Tensor softmax(const Tensor& scores) {
  Tensor out(scores.shape());
  double m = scores[0];
  for (size_t i = 1; i < scores.size(); ++i) m = std::max(m, scores[i]);
  double sum = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    sum += out[i];
  }
  for (size_t i = 0; i < out.size(); ++i) out[i] /= sum;
  return out;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& d_probs) {
  double dot = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) dot += probs[i] * d_probs[i];
  Tensor d_scores(probs.shape());
  for (size_t i = 0; i < probs.size(); ++i) {
    d_scores[i] = probs[i] * (d_probs[i] - dot);
  }
  return d_scores;
}

namespace {

Tensor map_scores(const Tensor& y_s, const LabelMap& map, MapCache* cache) {
  if (const auto* r = std::get_if<RandomMap>(&map)) {
    Tensor scores({r->target_to_source.size()});
    for (size_t k = 0; k < r->target_to_source.size(); ++k) {
      const int idx = r->target_to_source[k];
      if (idx < 0 || static_cast<size_t>(idx) >= y_s.size()) {
        throw std::invalid_argument("random map index out of range");
      }
      scores[k] = y_s[idx];
    }
    return scores;
  }
  if (const auto* f = std::get_if<Fc1Map>(&map)) {
    const size_t kt = f->weight.dim(0), ks = f->weight.dim(1);
    if (y_s.size() != ks) throw std::invalid_argument("fc1 map input size mismatch");
    Tensor scores({kt});
    for (size_t k = 0; k < kt; ++k) {
      double v = f->bias[k];
      for (size_t j = 0; j < ks; ++j) v += f->weight.at2(k, j) * y_s[j];
      scores[k] = v;
    }
    return scores;
  }
  const auto& f = std::get<Fc2Map>(map);
  const size_t hidden = f.w1.dim(0), ks = f.w1.dim(1), kt = f.w2.dim(0);
  if (y_s.size() != ks) throw std::invalid_argument("fc2 map input size mismatch");
  Tensor pre({hidden}), act({hidden});
  for (size_t hh = 0; hh < hidden; ++hh) {
    double v = f.b1[hh];
    for (size_t j = 0; j < ks; ++j) v += f.w1.at2(hh, j) * y_s[j];
    pre[hh] = v;
    act[hh] = std::max(0.0, v);
  }
  Tensor scores({kt});
  for (size_t k = 0; k < kt; ++k) {
    double v = f.b2[k];
    for (size_t hh = 0; hh < hidden; ++hh) v += f.w2.at2(k, hh) * act[hh];
    scores[k] = v;
  }
  if (cache) {
    cache->hidden_pre = pre;
    cache->hidden = act;
  }
  return scores;
}

}  // namespace

Tensor map_labels(const Tensor& source_logits, const LabelMap& map) {
  if (!source_logits.all_finite()) {
    throw std::invalid_argument("source logits must be finite");
  }
  return softmax(map_scores(source_logits, map, nullptr));
}

Tensor map_labels_forward(const Tensor& source_logits, const LabelMap& map,
                          MapCache& cache) {
  cache.source_logits = source_logits;
  cache.probs = softmax(map_scores(source_logits, map, &cache));
  return cache.probs;
}

MapBackward map_labels_backward(const LabelMap& map, const MapCache& cache,
                                const Tensor& d_scores) {
  if (cache.source_logits.size() == 0) {
    throw std::invalid_argument("map backward requires a cached forward pass");
  }
  MapBackward out;
  out.d_source_logits = Tensor(cache.source_logits.shape());

  if (const auto* r = std::get_if<RandomMap>(&map)) {
    for (size_t k = 0; k < r->target_to_source.size(); ++k) {
      out.d_source_logits[r->target_to_source[k]] += d_scores[k];
    }
    return out;  // no trainable parameters
  }
  if (const auto* f = std::get_if<Fc1Map>(&map)) {
    const size_t kt = f->weight.dim(0), ks = f->weight.dim(1);
    Tensor dw({kt, ks}), db({kt});
    for (size_t k = 0; k < kt; ++k) {
      db[k] = d_scores[k];
      for (size_t j = 0; j < ks; ++j) {
        dw.at2(k, j) = d_scores[k] * cache.source_logits[j];
        out.d_source_logits[j] += f->weight.at2(k, j) * d_scores[k];
      }
    }
    out.param_grads = {std::move(dw), std::move(db)};
    return out;
  }
  const auto& f = std::get<Fc2Map>(map);
  const size_t hidden = f.w1.dim(0), ks = f.w1.dim(1), kt = f.w2.dim(0);
  Tensor dw2({kt, hidden}), db2({kt}), dhidden({hidden});
  for (size_t k = 0; k < kt; ++k) {
    db2[k] = d_scores[k];
    for (size_t hh = 0; hh < hidden; ++hh) {
      dw2.at2(k, hh) = d_scores[k] * cache.hidden[hh];
      dhidden[hh] += f.w2.at2(k, hh) * d_scores[k];
    }
  }
  Tensor dw1({hidden, ks}), db1({hidden});
  for (size_t hh = 0; hh < hidden; ++hh) {
    const double dpre = cache.hidden_pre[hh] > 0.0 ? dhidden[hh] : 0.0;
    db1[hh] = dpre;
    for (size_t j = 0; j < ks; ++j) {
      dw1.at2(hh, j) = dpre * cache.source_logits[j];
      out.d_source_logits[j] += f.w1.at2(hh, j) * dpre;
    }
  }
  out.param_grads = {std::move(dw1), std::move(db1), std::move(dw2),
                     std::move(db2)};
  return out;
}

std::vector<Tensor*> label_map_params(LabelMap& map) {
  if (auto* f = std::get_if<Fc1Map>(&map)) return {&f->weight, &f->bias};
  if (auto* f = std::get_if<Fc2Map>(&map)) {
    return {&f->w1, &f->b1, &f->w2, &f->b2};
  }
  return {};
}

std::vector<const Tensor*> label_map_params(const LabelMap& map) {
  if (const auto* f = std::get_if<Fc1Map>(&map)) return {&f->weight, &f->bias};
  if (const auto* f = std::get_if<Fc2Map>(&map)) {
    return {&f->w1, &f->b1, &f->w2, &f->b2};
  }
  return {};
}

}  // namespace prompate
