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

#include <variant>
#include <vector>

#include "prompate/rng.hpp"
#include "prompate/tensor.hpp"

namespace prompate {

// Geometry of the input transformation: the target image is resized to
// (rescale_h, rescale_w), centered inside the source input plane, and
// surrounded by the trainable border when masked.
struct PromptSpec {
  int channels = 1;
  int height = 32;
  int width = 32;
  int rescale_h = 24;
  int rescale_w = 24;
  bool masked = true;

  void validate() const;
  int top_offset() const { return (height - rescale_h) / 2; }
  int left_offset() const { return (width - rescale_w) / 2; }
};

enum class MapKind { kRandom, kFc1, kFc2 };

std::string to_string(MapKind k);
MapKind map_kind_from_string(const std::string& s);

// Fixed injective assignment of target class -> source class index.
struct RandomMap {
  std::vector<int> target_to_source;
};

struct Fc1Map {
  Tensor weight;  // K_T x K_S
  Tensor bias;    // K_T
};

struct Fc2Map {
  Tensor w1;  // H x K_S
  Tensor b1;  // H
  Tensor w2;  // K_T x H
  Tensor b2;  // K_T
};

using LabelMap = std::variant<RandomMap, Fc1Map, Fc2Map>;

struct PromptParams {
  Tensor omega1;  // shaped like the source input
  LabelMap label_map;
};

MapKind map_kind(const LabelMap& map);
int map_target_classes(const LabelMap& map);

// Draws a fixed injective map / small-uniform FC weights from the stream.
LabelMap make_label_map(MapKind kind, int source_classes, int target_classes,
                        RandomStream& rng);
PromptParams make_prompt_params(const PromptSpec& spec, MapKind kind,
                                int source_classes, int target_classes,
                                RandomStream& rng);

// Border mask: 1 outside the centered rescale window, 0 inside; all ones
// when spec.masked is false (no-mask ablation).
Tensor build_mask(const PromptSpec& spec);

// Bilinear, half-pixel centers, edge-clamped. Preserves constants exactly.
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);

// Resized target placed centered on a zero canvas of source dimensions.
Tensor embed_target(const Tensor& x_t, const PromptSpec& spec);

// Masked mode: border pixels take omega1 bitwise, interior pixels take the
// embedded target bitwise. No-mask mode: omega1 + embedded target.
Tensor apply_prompt(const Tensor& x_t, const PromptParams& params,
                    const PromptSpec& spec);

// Gradient of the prompted input w.r.t. omega1: the mask zeroes interior
// pixels in masked mode; the additive no-mask prompt passes it through.
Tensor omega1_grad(const Tensor& d_prompted, const PromptSpec& spec);

Tensor softmax(const Tensor& scores);
// d(scores) given d(probs), via the softmax Jacobian.
Tensor softmax_backward(const Tensor& probs, const Tensor& d_probs);

// Target-class probabilities from source logits: selection or FC stack,
// then softmax.
Tensor map_labels(const Tensor& source_logits, const LabelMap& map);

struct MapCache {
  Tensor source_logits;
  Tensor hidden_pre;  // Fc2 only
  Tensor hidden;      // Fc2 only
  Tensor probs;
};

Tensor map_labels_forward(const Tensor& source_logits, const LabelMap& map,
                          MapCache& cache);

struct MapBackward {
  Tensor d_source_logits;
  std::vector<Tensor> param_grads;  // aligned with label_map_params order
};

// Backward from d(scores), the gradient at the pre-softmax output.
MapBackward map_labels_backward(const LabelMap& map, const MapCache& cache,
                                const Tensor& d_scores);

// Trainable tensors of the map (empty for RandomMap).
std::vector<Tensor*> label_map_params(LabelMap& map);
std::vector<const Tensor*> label_map_params(const LabelMap& map);

}  // namespace prompate
