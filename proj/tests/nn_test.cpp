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

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "testutil.hpp"

using namespace prompate;
using namespace prompate::testutil;

namespace {

ArchSpec tiny_arch() {
  ArchSpec arch;
  arch.in_channels = 1;
  arch.in_h = 8;
  arch.in_w = 8;
  arch.conv_channels = {3, 4};
  arch.num_classes = 4;
  return arch;
}

SyntheticSpec blob_spec(int classes, int count, uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.channels = 1;
  spec.height = 12;
  spec.width = 12;
  spec.family = PatternFamily::kBlobs;
  spec.gap_knob = 0.0;
  spec.noise_level = 0.02;
  spec.count = count;
  spec.seed = seed;
  return spec;
}

// Source model over 12x12 blobs used by the re-teacher fixtures.
FrozenSourceModel small_source(int classes, uint64_t seed) {
  SyntheticSpec spec = blob_spec(classes, classes * 40, seed);
  ArchSpec arch;
  arch.in_channels = 1;
  arch.in_h = 12;
  arch.in_w = 12;
  arch.conv_channels = {4, 8};
  arch.num_classes = classes;
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.lr_decay_per_epoch = 0.9;
  cfg.batch_size = 16;
  cfg.epochs = 8;
  cfg.seed = seed;
  return train_source(generate(spec), arch, cfg);
}

PromptSpec small_prompt_spec(bool masked = true) {
  PromptSpec spec;
  spec.channels = 1;
  spec.height = 12;
  spec.width = 12;
  spec.rescale_h = 8;
  spec.rescale_w = 8;
  spec.masked = masked;
  return spec;
}

std::vector<Tensor*> frozen_params_probe(const FrozenSourceModel& m) {
  // Parameter order is canonical; used only for bitwise comparisons.
  return const_cast<SourceNet&>(m.net()).params();
}

}  // namespace

TEST_CASE("scratch model gradients match finite differences") {
  RandomStream rng(1001);
  int checked = 0;
  uint64_t seed = 0;
  while (checked < 6) {
    ++seed;
    ScratchModel model(tiny_arch(), seed);
    const Tensor x = random_image({1, 8, 8}, rng);
    if (net_kink_margin(model.net(), x) < 0.02) continue;
    const int label = static_cast<int>(rng.uniform_index(4));
    CHECK(max_rel_grad_err(model, x, label, rng) < 1e-4);
    ++checked;
  }
}

TEST_CASE("re-teacher gradients match finite differences on a 4x4 toy model") {
  ArchSpec arch;
  arch.in_channels = 1;
  arch.in_h = 4;
  arch.in_w = 4;
  arch.conv_channels = {3};
  arch.num_classes = 5;

  PromptSpec spec;
  spec.channels = 1;
  spec.height = 4;
  spec.width = 4;
  spec.rescale_h = 2;
  spec.rescale_w = 2;

  RandomStream rng(2002);
  for (MapKind kind : {MapKind::kRandom, MapKind::kFc1, MapKind::kFc2}) {
    for (bool masked : {true, false}) {
      spec.masked = masked;
      int checked = 0;
      uint64_t seed = 0;
      while (checked < 2) {
        ++seed;
        const FrozenSourceModel source(SourceNet(arch, seed), 0.0);
        ReTeacher teacher(&source, spec, kind, 3, seed + 17);
        const Tensor x = random_image({1, 3, 3}, rng);
        if (reteacher_kink_margin(teacher, x) < 0.02) continue;
        const int label = static_cast<int>(rng.uniform_index(3));
        CHECK(max_rel_grad_err(teacher, x, label, rng) < 1e-4);
        ++checked;
      }
    }
  }
}

TEST_CASE("masked re-teacher has exactly zero interior omega1 gradient") {
  ArchSpec arch;
  arch.in_channels = 1;
  arch.in_h = 6;
  arch.in_w = 6;
  arch.conv_channels = {3};
  arch.num_classes = 4;
  const FrozenSourceModel source(SourceNet(arch, 3), 0.0);

  PromptSpec spec;
  spec.channels = 1;
  spec.height = 6;
  spec.width = 6;
  spec.rescale_h = 4;
  spec.rescale_w = 4;
  spec.masked = true;

  RandomStream rng(3003);
  ReTeacher teacher(&source, spec, MapKind::kFc1, 2, 9);
  std::vector<Tensor> grads;
  for (Tensor* p : teacher.trainable_params()) grads.emplace_back(p->shape());
  teacher.example_grads(random_image({1, 4, 4}, rng), 1, grads);

  const Tensor mask = build_mask(spec);
  bool border_has_signal = false;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0.0) {
      CHECK(grads[0][i] == 0.0);
    } else if (grads[0][i] != 0.0) {
      border_has_signal = true;
    }
  }
  CHECK(border_has_signal);
}

TEST_CASE("adam step equals the textbook formula") {
  Tensor theta({2}, {1.0, -2.0});
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Adam opt({&theta}, b1, b2, eps);

  double m[2] = {0, 0}, v[2] = {0, 0};
  double expect[2] = {1.0, -2.0};
  RandomStream rng(4004);
  for (int t = 1; t <= 3; ++t) {
    Tensor g({2}, {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    opt.step({g}, lr);
    for (int i = 0; i < 2; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(b1, t));
      const double vhat = v[i] / (1 - std::pow(b2, t));
      expect[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      CHECK(std::abs(theta[i] - expect[i]) < 1e-12);
    }
  }
}

TEST_CASE("training is bitwise deterministic in the seed") {
  const SyntheticSpec spec = blob_spec(4, 80, 11);
  const Dataset ds = generate(spec);
  const std::vector<Tensor> xs = make_examples(ds);

  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.epochs = 3;
  cfg.seed = 77;

  ArchSpec arch = tiny_arch();
  arch.in_h = 12;
  arch.in_w = 12;
  ScratchModel c(arch, 5), d(arch, 5);
  fit(c, xs, ds.labels, cfg);
  fit(d, xs, ds.labels, cfg);
  const auto pc = c.trainable_params(), pd = d.trainable_params();
  for (size_t i = 0; i < pc.size(); ++i) CHECK(bitwise_equal(*pc[i], *pd[i]));
}

TEST_CASE("train_source reaches the separable-oracle bar") {
  const SyntheticSpec spec = blob_spec(2, 200, 21);
  const Dataset ds = generate(spec);

  // Independent oracle: nearest-class-mean linear separator on raw pixels
  // must already split the fixture, so 95% is attainable.
  const size_t pixels = ds.images.size() / ds.size();
  std::vector<double> mean0(pixels, 0.0), mean1(pixels, 0.0);
  size_t n0 = 0, n1 = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    const Tensor img = ds.image(i);
    auto& mean = ds.labels[i] == 0 ? mean0 : mean1;
    (ds.labels[i] == 0 ? n0 : n1)++;
    for (size_t p = 0; p < pixels; ++p) mean[p] += img[p];
  }
  for (size_t p = 0; p < pixels; ++p) {
    mean0[p] /= static_cast<double>(n0);
    mean1[p] /= static_cast<double>(n1);
  }
  size_t oracle_correct = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    const Tensor img = ds.image(i);
    double d0 = 0.0, d1 = 0.0;
    for (size_t p = 0; p < pixels; ++p) {
      d0 += (img[p] - mean0[p]) * (img[p] - mean0[p]);
      d1 += (img[p] - mean1[p]) * (img[p] - mean1[p]);
    }
    if ((d0 < d1 ? 0 : 1) == ds.labels[i]) ++oracle_correct;
  }
  CHECK(oracle_correct >= 190);  // fixture is linearly separable

  ArchSpec arch;
  arch.in_channels = 1;
  arch.in_h = 12;
  arch.in_w = 12;
  arch.conv_channels = {4, 8};
  arch.num_classes = 2;
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.seed = 3;
  const FrozenSourceModel model = train_source(ds, arch, cfg);
  CHECK(model.source_test_accuracy() >= 0.95);
}

TEST_CASE("train_source with zero lr keeps the initialization") {
  const Dataset ds = generate(blob_spec(3, 60, 31));
  ArchSpec arch;
  arch.in_channels = 1;
  arch.in_h = 12;
  arch.in_w = 12;
  arch.conv_channels = {3};
  arch.num_classes = 3;
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 1;
  cfg.seed = 5;
  const FrozenSourceModel trained = train_source(ds, arch, cfg);
  const ScratchModel init(arch, derive_seed(cfg.seed, "source-model", 0));
  const auto pa = frozen_params_probe(trained);
  const auto pb = const_cast<ScratchModel&>(init).trainable_params();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(*pa[i], *pb[i]));
}

TEST_CASE("train_source is deterministic") {
  const Dataset ds = generate(blob_spec(3, 90, 41));
  ArchSpec arch;
  arch.in_channels = 1;
  arch.in_h = 12;
  arch.in_w = 12;
  arch.conv_channels = {3};
  arch.num_classes = 3;
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.epochs = 2;
  cfg.seed = 6;
  CHECK(train_source(ds, arch, cfg).fingerprint() ==
        train_source(ds, arch, cfg).fingerprint());
}

TEST_CASE("epoch losses are nonincreasing on a separable fixture") {
  const Dataset ds = generate(blob_spec(2, 20, 51));
  ArchSpec arch;
  arch.in_channels = 1;
  arch.in_h = 12;
  arch.in_w = 12;
  arch.conv_channels = {3};
  arch.num_classes = 2;
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.seed = 8;
  ScratchModel model(arch, 8);
  const FitResult res = fit(model, make_examples(ds), ds.labels, cfg);
  for (size_t e = 1; e < res.epoch_losses.size(); ++e) {
    CHECK(res.epoch_losses[e] <= res.epoch_losses[e - 1] + 1e-9);
  }
}

TEST_CASE("train_reteacher adapts a separable slice and keeps the source frozen") {
  const FrozenSourceModel source = small_source(6, 61);
  const uint64_t fp_before = source.fingerprint();

  SyntheticSpec tspec = blob_spec(3, 50, 62);
  tspec.height = 8;
  tspec.width = 8;
  tspec.gap_knob = 0.0;
  const Dataset slice = generate(tspec);
  const std::vector<Tensor> xs = make_examples(slice);

  TrainConfig cfg;
  cfg.seed = 63;
  const ReTeacher teacher = train_reteacher(
      xs, slice.labels, source, small_prompt_spec(), MapKind::kFc1, 3, cfg);

  CHECK(source.fingerprint() == fp_before);
  CHECK(source.recompute_fingerprint() == fp_before);

  const double train_acc = evaluate_examples(
      [&](const Tensor& x) { return teacher.predict(x); }, xs, slice.labels);
  CHECK(train_acc >= 0.9);
}

TEST_CASE("re-teacher training is deterministic in the seed") {
  const FrozenSourceModel source = small_source(5, 71);
  SyntheticSpec tspec = blob_spec(3, 30, 72);
  tspec.height = 8;
  tspec.width = 8;
  const Dataset slice = generate(tspec);
  const std::vector<Tensor> xs = make_examples(slice);
  TrainConfig cfg;
  cfg.seed = 73;
  cfg.epochs = 3;

  ReTeacher a = train_reteacher(xs, slice.labels, source, small_prompt_spec(),
                                MapKind::kFc2, 3, cfg);
  ReTeacher b = train_reteacher(xs, slice.labels, source, small_prompt_spec(),
                                MapKind::kFc2, 3, cfg);
  const auto pa = a.trainable_params(), pb = b.trainable_params();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(*pa[i], *pb[i]));
}

TEST_CASE("adversarial random map trains only omega1 and stays bounded") {
  const FrozenSourceModel source = small_source(6, 81);
  SyntheticSpec tspec = blob_spec(3, 45, 82);
  tspec.height = 8;
  tspec.width = 8;
  const Dataset slice = generate(tspec);
  const std::vector<Tensor> xs = make_examples(slice);

  TrainConfig cfg;
  cfg.seed = 83;
  cfg.epochs = 5;
  ReTeacher teacher(&source, small_prompt_spec(), MapKind::kRandom, 3, 84);
  const RandomMap before =
      std::get<RandomMap>(teacher.prompt_params().label_map);
  CHECK(teacher.trainable_params().size() == 1);  // omega1 only
  fit(teacher, xs, slice.labels, cfg);
  const RandomMap after =
      std::get<RandomMap>(teacher.prompt_params().label_map);
  CHECK(before.target_to_source == after.target_to_source);

  // Exhaustive relabeling oracle: trained accuracy cannot beat the best
  // permutation of the fixed map's selected logits.
  std::vector<int> preds(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) preds[i] = teacher.predict(xs[i]);
  int perm[3] = {0, 1, 2};
  std::sort(perm, perm + 3);
  double best = 0.0;
  do {
    size_t correct = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      if (perm[preds[i]] == slice.labels[i]) ++correct;
    }
    best = std::max(best, static_cast<double>(correct) / xs.size());
  } while (std::next_permutation(perm, perm + 3));
  const double trained = evaluate_examples(
      [&](const Tensor& x) { return teacher.predict(x); }, xs, slice.labels);
  CHECK(trained <= best + 1e-12);
}

TEST_CASE("student training modes") {
  const FrozenSourceModel source = small_source(5, 91);
  SyntheticSpec tspec = blob_spec(3, 90, 92);
  tspec.height = 8;
  tspec.width = 8;
  const Dataset pool = generate(tspec);
  const std::vector<Tensor> xs = make_examples(pool);

  const std::vector<Tensor> answered(xs.begin(), xs.begin() + 60);
  const std::vector<int> labels(pool.labels.begin(), pool.labels.begin() + 60);
  const std::vector<Tensor> unlabeled(xs.begin() + 60, xs.end());

  StudentConfig cfg;
  cfg.train.seed = 93;
  cfg.train.epochs = 5;

  SUBCASE("zero rounds is plain supervised training") {
    cfg.pseudo_label_rounds = 0;
    ReTeacher stu = train_student(answered, labels, unlabeled, source,
                                  small_prompt_spec(), MapKind::kFc1, 3, cfg);
    ReTeacher plain(&source, small_prompt_spec(), MapKind::kFc1, 3,
                    cfg.train.seed);
    fit(plain, answered, labels, cfg.train);
    const auto pa = stu.trainable_params(), pb = plain.trainable_params();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(*pa[i], *pb[i]));
  }

  SUBCASE("threshold 1.0 adds nothing") {
    cfg.pseudo_label_rounds = 2;
    cfg.confidence_threshold = 1.0;
    ReTeacher stu = train_student(answered, labels, unlabeled, source,
                                  small_prompt_spec(), MapKind::kFc1, 3, cfg);
    StudentConfig base = cfg;
    base.pseudo_label_rounds = 0;
    ReTeacher round0 = train_student(answered, labels, unlabeled, source,
                                     small_prompt_spec(), MapKind::kFc1, 3, base);
    const auto pa = stu.trainable_params(), pb = round0.trainable_params();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(*pa[i], *pb[i]));
  }

  SUBCASE("correct abundant labels track the supervised baseline") {
    cfg.pseudo_label_rounds = 2;
    cfg.confidence_threshold = 0.95;
    ReTeacher stu = train_student(answered, labels, unlabeled, source,
                                  small_prompt_spec(), MapKind::kFc1, 3, cfg);
    ReTeacher baseline(&source, small_prompt_spec(), MapKind::kFc1, 3,
                       cfg.train.seed);
    fit(baseline, answered, labels, cfg.train);
    const double acc_stu = evaluate_examples(
        [&](const Tensor& x) { return stu.predict(x); }, xs, pool.labels);
    const double acc_base = evaluate_examples(
        [&](const Tensor& x) { return baseline.predict(x); }, xs, pool.labels);
    CHECK(acc_stu >= acc_base - 0.02);
  }

  SUBCASE("empty answered set is rejected") {
    CHECK_THROWS_AS(train_student({}, {}, unlabeled, source,
                                  small_prompt_spec(), MapKind::kFc1, 3, cfg),
                    std::invalid_argument);
  }
}

TEST_CASE("evaluate") {
  // Balanced 3-class set; a constant predictor scores exactly 1/3.
  Dataset test;
  test.images = Tensor({9, 1, 1, 1});
  test.labels = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  test.num_classes = 3;
  test.split = Split::kTest;
  for (size_t i = 0; i < 9; ++i) test.images[i] = static_cast<double>(test.labels[i]);

  CHECK(evaluate([](const Tensor&) { return 1; }, test) ==
        doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(evaluate([](const Tensor& x) { return static_cast<int>(x[0]); }, test) ==
        1.0);

  // Hand-counted confusion on a 10-sample fixture: predictor flips class 2.
  Dataset ten;
  ten.images = Tensor({10, 1, 1, 1});
  ten.labels = {0, 0, 0, 1, 1, 1, 2, 2, 2, 2};
  ten.num_classes = 3;
  ten.split = Split::kTest;
  for (size_t i = 0; i < 10; ++i) ten.images[i] = static_cast<double>(ten.labels[i]);
  const double acc = evaluate(
      [](const Tensor& x) {
        const int y = static_cast<int>(x[0]);
        return y == 2 ? 0 : y;
      },
      ten);
  CHECK(acc == doctest::Approx(0.6).epsilon(1e-12));  // 6 of 10 by hand

  Dataset pool = ten;
  pool.split = Split::kPublicPool;
  CHECK_THROWS_AS(evaluate([](const Tensor&) { return 0; }, pool),
                  std::invalid_argument);

  Dataset empty;
  empty.images = Tensor({0, 1, 1, 1});
  empty.num_classes = 2;
  empty.split = Split::kTest;
  CHECK_THROWS_AS(evaluate([](const Tensor&) { return 0; }, empty),
                  std::invalid_argument);
}

TEST_CASE("config validation") {
  TrainConfig bad;
  bad.lr = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.lr_decay_per_epoch = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  StudentConfig sbad;
  sbad.confidence_threshold = 0.0;
  CHECK_THROWS_AS(sbad.validate(), std::invalid_argument);
  sbad = StudentConfig{};
  sbad.pseudo_label_rounds = -1;
  CHECK_THROWS_AS(sbad.validate(), std::invalid_argument);
}

TEST_CASE("empty slice is rejected") {
  const FrozenSourceModel source = small_source(4, 95);
  TrainConfig cfg;
  CHECK_THROWS_AS(train_reteacher({}, {}, source, small_prompt_spec(),
                                  MapKind::kFc1, 2, cfg),
                  std::invalid_argument);
}
