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
#include "prompate/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <variant>

#include "prompate/parallel.hpp"
#include "prompate/rng.hpp"

namespace prompate {

namespace {

using nlohmann::json;

double round_to(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(x * scale) / scale;
}

std::string join_key(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("config key " + join_key(path, it.key()) +
                        ": unknown key");
    }
  }
}

template <typename T>
T jget(const json& j, const std::string& path, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key " + join_key(path, key) + ": wrong type");
  }
}

SyntheticSpec spec_from_json(const json& j, const std::string& path,
                             SyntheticSpec def) {
  check_keys(j, path,
             {"classes", "channels", "height", "width", "family", "gap_knob",
              "noise_level", "count"});
  SyntheticSpec s = def;
  s.classes = jget(j, path, "classes", def.classes);
  s.channels = jget(j, path, "channels", def.channels);
  s.height = jget(j, path, "height", def.height);
  s.width = jget(j, path, "width", def.width);
  if (j.contains("family")) {
    try {
      s.family = pattern_family_from_string(j.at("family").get<std::string>());
    } catch (const std::exception&) {
      throw ConfigError("config key " + join_key(path, "family") +
                        ": expected blobs|stripes|checker");
    }
  }
  s.gap_knob = jget(j, path, "gap_knob", def.gap_knob);
  s.noise_level = jget(j, path, "noise_level", def.noise_level);
  s.count = jget(j, path, "count", def.count);
  return s;
}

json spec_to_json(const SyntheticSpec& s) {
  return {{"classes", s.classes},       {"channels", s.channels},
          {"height", s.height},         {"width", s.width},
          {"family", to_string(s.family)}, {"gap_knob", s.gap_knob},
          {"noise_level", s.noise_level},  {"count", s.count}};
}

TrainConfig train_from_json(const json& j, const std::string& path,
                            TrainConfig def) {
  check_keys(j, path,
             {"lr", "beta1", "beta2", "eps_hat", "lr_decay_per_epoch",
              "batch_size", "epochs"});
  TrainConfig t = def;
  t.lr = jget(j, path, "lr", def.lr);
  t.beta1 = jget(j, path, "beta1", def.beta1);
  t.beta2 = jget(j, path, "beta2", def.beta2);
  t.eps_hat = jget(j, path, "eps_hat", def.eps_hat);
  t.lr_decay_per_epoch = jget(j, path, "lr_decay_per_epoch", def.lr_decay_per_epoch);
  t.batch_size = jget(j, path, "batch_size", def.batch_size);
  t.epochs = jget(j, path, "epochs", def.epochs);
  return t;
}

json train_to_json(const TrainConfig& t) {
  return {{"lr", t.lr},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"eps_hat", t.eps_hat},
          {"lr_decay_per_epoch", t.lr_decay_per_epoch},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs}};
}

void validate_in(const std::string& key, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key " + key + ": " + e.what());
  }
}

}  // namespace

std::string to_string(TeacherKind k) {
  switch (k) {
    case TeacherKind::kVisualPrompt: return "vp";
    case TeacherKind::kScratch: return "scratch";
    case TeacherKind::kTransfer: return "transfer";
  }
  return "?";
}

std::string to_string(StudentKind k) {
  return k == StudentKind::kVisualPrompt ? "vp" : "scratch";
}

TeacherKind teacher_kind_from_string(const std::string& s) {
  if (s == "vp") return TeacherKind::kVisualPrompt;
  if (s == "scratch") return TeacherKind::kScratch;
  if (s == "transfer") return TeacherKind::kTransfer;
  throw std::invalid_argument("expected vp|scratch|transfer, got " + s);
}

StudentKind student_kind_from_string(const std::string& s) {
  if (s == "vp") return StudentKind::kVisualPrompt;
  if (s == "scratch") return StudentKind::kScratch;
  throw std::invalid_argument("expected vp|scratch, got " + s);
}

ArchSpec ExperimentConfig::source_arch() const {
  ArchSpec a;
  a.in_channels = source.channels;
  a.in_h = source.height;
  a.in_w = source.width;
  a.conv_channels = conv_channels;
  a.num_classes = source.classes;
  return a;
}

ArchSpec ExperimentConfig::target_arch() const {
  ArchSpec a;
  a.in_channels = target.channels;
  a.in_h = target.height;
  a.in_w = target.width;
  a.conv_channels = conv_channels;
  a.num_classes = target.classes;
  return a;
}

PromptSpec ExperimentConfig::prompt_spec() const {
  PromptSpec p;
  p.channels = source.channels;
  p.height = source.height;
  p.width = source.width;
  p.rescale_h = rescale_h;
  p.rescale_w = rescale_w;
  p.masked = masked;
  return p;
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("config key repeats: must be >= 1");
  if (workers < 0) throw ConfigError("config key workers: must be >= 0");
  validate_in("source", [&] { source.validate(); });
  validate_in("target", [&] { target.validate(); });
  validate_in("source_train", [&] { source_train.validate(); });
  validate_in("teacher_train", [&] { teacher_train.validate(); });
  validate_in("student", [&] { student.validate(); });
  validate_in("prompt", [&] { prompt_spec().validate(); });
  validate_in("gnmax", [&] { gnmax.validate(); });
  if (conv_channels.empty()) {
    throw ConfigError("config key conv_channels: must be non-empty");
  }
  for (int c : conv_channels) {
    if (c < 1) throw ConfigError("config key conv_channels: entries must be >= 1");
  }
  if (target.channels != source.channels) {
    throw ConfigError("config key target.channels: must match source.channels");
  }
  if (target.classes > source.classes) {
    throw ConfigError("config key target.classes: must not exceed source.classes");
  }
  if (public_frac < 0.0 || test_frac < 0.0 || public_frac + test_frac >= 1.0) {
    throw ConfigError("config key public_frac: fractions must be nonnegative and sum below 1");
  }
  if (num_teachers < 1) throw ConfigError("config key num_teachers: must be >= 1");
  const auto pool_size = static_cast<size_t>(std::floor(public_frac * target.count));
  const auto test_size = static_cast<size_t>(std::floor(test_frac * target.count));
  const size_t private_size = static_cast<size_t>(target.count) - pool_size - test_size;
  if (static_cast<size_t>(num_teachers) > private_size) {
    throw ConfigError("config key num_teachers: exceeds private split size " +
                      std::to_string(private_size));
  }
  if (max_queries > pool_size) {
    throw ConfigError("config key max_queries: exceeds public pool size " +
                      std::to_string(pool_size));
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("config key delta: must lie in (0, 1)");
  }
  if (!accounting_off) {
    if (!(gnmax.sigma1 > 0.0)) {
      throw ConfigError("config key gnmax.sigma1: must be > 0 unless accounting is off");
    }
    if (!(gnmax.sigma2 > 0.0)) {
      throw ConfigError("config key gnmax.sigma2: must be > 0 unless accounting is off");
    }
  }
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.master_seed = 1;
  cfg.repeats = 3;
  cfg.workers = 0;

  // The public source task blends both pattern families so the frozen
  // model's logits span blob and orientation structure, the way a broad
  // pretraining corpus would.
  cfg.source.classes = 26;
  cfg.source.channels = 1;
  cfg.source.height = 32;
  cfg.source.width = 32;
  cfg.source.family = PatternFamily::kStripes;
  cfg.source.gap_knob = 0.5;
  cfg.source.noise_level = 0.05;
  cfg.source.count = 2600;

  cfg.source_train.lr = 0.01;
  cfg.source_train.lr_decay_per_epoch = 0.9;
  cfg.source_train.batch_size = 32;
  cfg.source_train.epochs = 8;

  cfg.target.classes = 10;
  cfg.target.channels = 1;
  cfg.target.height = 16;
  cfg.target.width = 16;
  cfg.target.family = PatternFamily::kStripes;
  cfg.target.gap_knob = 0.8;
  cfg.target.noise_level = 0.05;
  cfg.target.count = 3000;

  cfg.num_teachers = 10;
  cfg.max_queries = 400;
  cfg.gnmax.threshold = 6.0;
  cfg.gnmax.sigma1 = 2.0;
  cfg.gnmax.sigma2 = 2.0;

  cfg.student.train.epochs = 10;
  cfg.student.pseudo_label_rounds = 2;
  cfg.student.confidence_threshold = 0.95;
  return cfg;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  check_keys(j, "",
             {"master_seed", "repeats", "workers", "source", "source_train",
              "conv_channels", "target", "public_frac", "test_frac",
              "num_teachers", "teacher_kind", "student_kind", "prompt",
              "map_kind", "teacher_train", "gnmax", "max_queries", "delta",
              "accounting", "student", "audit_path"});
  ExperimentConfig cfg = default_config();
  cfg.master_seed = jget<uint64_t>(j, "", "master_seed", cfg.master_seed);
  cfg.repeats = jget(j, "", "repeats", cfg.repeats);
  cfg.workers = jget(j, "", "workers", cfg.workers);
  if (j.contains("source")) cfg.source = spec_from_json(j.at("source"), "source", cfg.source);
  if (j.contains("target")) cfg.target = spec_from_json(j.at("target"), "target", cfg.target);
  if (j.contains("source_train")) {
    cfg.source_train = train_from_json(j.at("source_train"), "source_train", cfg.source_train);
  }
  if (j.contains("teacher_train")) {
    cfg.teacher_train = train_from_json(j.at("teacher_train"), "teacher_train", cfg.teacher_train);
  }
  cfg.conv_channels = jget(j, "", "conv_channels", cfg.conv_channels);
  cfg.public_frac = jget(j, "", "public_frac", cfg.public_frac);
  cfg.test_frac = jget(j, "", "test_frac", cfg.test_frac);
  cfg.num_teachers = jget(j, "", "num_teachers", cfg.num_teachers);
  if (j.contains("teacher_kind")) {
    validate_in("teacher_kind", [&] {
      cfg.teacher_kind = teacher_kind_from_string(j.at("teacher_kind").get<std::string>());
    });
  }
  if (j.contains("student_kind")) {
    validate_in("student_kind", [&] {
      cfg.student_kind = student_kind_from_string(j.at("student_kind").get<std::string>());
    });
  }
  if (j.contains("prompt")) {
    const json& p = j.at("prompt");
    check_keys(p, "prompt", {"rescale_h", "rescale_w", "masked"});
    cfg.rescale_h = jget(p, "prompt", "rescale_h", cfg.rescale_h);
    cfg.rescale_w = jget(p, "prompt", "rescale_w", cfg.rescale_w);
    cfg.masked = jget(p, "prompt", "masked", cfg.masked);
  }
  if (j.contains("map_kind")) {
    validate_in("map_kind", [&] {
      cfg.map_kind = map_kind_from_string(j.at("map_kind").get<std::string>());
    });
  }
  if (j.contains("gnmax")) {
    const json& g = j.at("gnmax");
    check_keys(g, "gnmax", {"threshold", "sigma1", "sigma2"});
    cfg.gnmax.threshold = jget(g, "gnmax", "threshold", cfg.gnmax.threshold);
    cfg.gnmax.sigma1 = jget(g, "gnmax", "sigma1", cfg.gnmax.sigma1);
    cfg.gnmax.sigma2 = jget(g, "gnmax", "sigma2", cfg.gnmax.sigma2);
  }
  cfg.max_queries = jget<size_t>(j, "", "max_queries", cfg.max_queries);
  cfg.delta = jget(j, "", "delta", cfg.delta);
  if (j.contains("accounting")) {
    const std::string mode = jget<std::string>(j, "", "accounting", "per-step");
    if (mode == "off") {
      cfg.accounting_off = true;
    } else {
      validate_in("accounting", [&] {
        cfg.accounting_off = false;
        cfg.accounting_mode = accounting_mode_from_string(mode);
      });
    }
  }
  if (j.contains("student")) {
    const json& s = j.at("student");
    check_keys(s, "student", {"train", "pseudo_label_rounds", "confidence_threshold"});
    if (s.contains("train")) {
      cfg.student.train = train_from_json(s.at("train"), "student.train", cfg.student.train);
    }
    cfg.student.pseudo_label_rounds =
        jget(s, "student", "pseudo_label_rounds", cfg.student.pseudo_label_rounds);
    cfg.student.confidence_threshold =
        jget(s, "student", "confidence_threshold", cfg.student.confidence_threshold);
  }
  cfg.audit_path = jget<std::string>(j, "", "audit_path", cfg.audit_path);
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["master_seed"] = cfg.master_seed;
  j["repeats"] = cfg.repeats;
  j["workers"] = cfg.workers;
  j["source"] = spec_to_json(cfg.source);
  j["source_train"] = train_to_json(cfg.source_train);
  j["conv_channels"] = cfg.conv_channels;
  j["target"] = spec_to_json(cfg.target);
  j["public_frac"] = cfg.public_frac;
  j["test_frac"] = cfg.test_frac;
  j["num_teachers"] = cfg.num_teachers;
  j["teacher_kind"] = to_string(cfg.teacher_kind);
  j["student_kind"] = to_string(cfg.student_kind);
  j["prompt"] = {{"rescale_h", cfg.rescale_h},
                 {"rescale_w", cfg.rescale_w},
                 {"masked", cfg.masked}};
  j["map_kind"] = to_string(cfg.map_kind);
  j["teacher_train"] = train_to_json(cfg.teacher_train);
  j["gnmax"] = {{"threshold", cfg.gnmax.threshold},
                {"sigma1", cfg.gnmax.sigma1},
                {"sigma2", cfg.gnmax.sigma2}};
  j["max_queries"] = cfg.max_queries;
  j["delta"] = cfg.delta;
  j["accounting"] =
      cfg.accounting_off ? "off" : to_string(cfg.accounting_mode);
  j["student"] = {{"train", train_to_json(cfg.student.train)},
                  {"pseudo_label_rounds", cfg.student.pseudo_label_rounds},
                  {"confidence_threshold", cfg.student.confidence_threshold}};
  j["audit_path"] = cfg.audit_path;
  return j;
}

void apply_override(json& j, const std::string& dotted_key,
                    const std::string& value) {
  if (dotted_key.empty()) throw ConfigError("override key must be non-empty");
  std::vector<std::string> parts;
  std::stringstream ss(dotted_key);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override key has empty segment: " + dotted_key);
    parts.push_back(part);
  }
  json* cur = &j;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cur->contains(parts[i]) || !(*cur)[parts[i]].is_object()) {
      (*cur)[parts[i]] = json::object();
    }
    cur = &(*cur)[parts[i]];
  }
  json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) {
    (*cur)[parts.back()] = value;  // plain string
  } else {
    (*cur)[parts.back()] = parsed;
  }
}

json ExperimentReport::to_json(bool include_wall_time) const {
  json j;
  j["epsilon"] = epsilon ? json(round_to(*epsilon, 4)) : json(nullptr);
  j["alpha_star"] = alpha_star ? json(round_to(*alpha_star, 4)) : json(nullptr);
  j["delta"] = delta;
  j["accounting_mode"] = accounting_mode;
  j["queries"] = queries;
  j["answered_queries"] = answered_queries;
  j["answer_accuracy_pct"] = round_to(answer_accuracy_pct, 2);
  j["threshold"] = threshold;
  j["sigma1"] = sigma1;
  j["sigma2"] = sigma2;
  j["num_teachers"] = num_teachers;
  j["source_test_accuracy_pct"] = round_to(source_test_accuracy_pct, 2);
  j["accuracy_mean_pct"] = round_to(accuracy_mean_pct, 2);
  j["accuracy_std_pct"] = round_to(accuracy_std_pct, 2);
  json accs = json::array();
  for (double a : per_repeat_accuracy_pct) accs.push_back(round_to(a, 2));
  j["per_repeat_accuracy_pct"] = accs;
  j["per_repeat_seeds"] = per_repeat_seeds;
  if (include_wall_time) j["wall_time_sec"] = round_to(wall_time_sec, 3);
  return j;
}

void verify_report_epsilon(const json& report) {
  const std::string mode = report.at("accounting_mode").get<std::string>();
  if (mode == "off") {
    if (!report.at("epsilon").is_null()) {
      throw std::runtime_error("report has epsilon but accounting is off");
    }
    return;
  }
  PrivacyLedger ledger;
  ledger.mode = accounting_mode_from_string(mode);
  ledger.threshold_checks = report.at("queries").get<uint64_t>();
  ledger.answered = report.at("answered_queries").get<uint64_t>();
  ledger.sigma1 = report.at("sigma1").get<double>();
  ledger.sigma2 = report.at("sigma2").get<double>();
  const double delta = report.at("delta").get<double>();
  const DpBudget budget = rdp_to_dp(ledger, delta);
  const double expect = round_to(budget.epsilon, 4);
  const double got = report.at("epsilon").get<double>();
  if (std::abs(expect - got) > 1e-9) {
    throw std::runtime_error("report epsilon " + std::to_string(got) +
                             " does not match ledger recomputation " +
                             std::to_string(expect));
  }
}

PipelineData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PipelineData data;
  SyntheticSpec source_spec = cfg.source;
  source_spec.seed = derive_seed(cfg.master_seed, "source-data", 0);
  data.source_dataset = generate(source_spec);

  SyntheticSpec target_spec = cfg.target;
  target_spec.seed = derive_seed(cfg.master_seed, "target-data", 0);
  const Dataset target = generate(target_spec);
  data.splits = split_three(target, cfg.public_frac, cfg.test_frac,
                            derive_seed(cfg.master_seed, "split", 0));
  data.plan = partition(data.splits.private_train, cfg.num_teachers,
                        derive_seed(cfg.master_seed, "partition", 0));
  return data;
}

namespace {

using AnyTeacher =
    std::variant<std::monostate, ReTeacher, ScratchModel, HeadTunedModel>;

int any_predict(const AnyTeacher& teacher, const Tensor& x) {
  return std::visit(
      [&](const auto& m) -> int {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          throw std::logic_error("teacher not trained");
        } else {
          return m.predict(x);
        }
      },
      teacher);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const int workers =
      cfg.workers > 0
          ? cfg.workers
          : std::max(1u, std::thread::hardware_concurrency());

  PipelineData data = prepare_data(cfg);

  TrainConfig source_train = cfg.source_train;
  source_train.seed = derive_seed(cfg.master_seed, "source-train", 0);
  source_train.workers = workers;
  const FrozenSourceModel source =
      train_source(data.source_dataset, cfg.source_arch(), source_train);

  const auto slices = data.plan.slices();
  const Dataset& priv = data.splits.private_train;
  std::vector<AnyTeacher> teachers(cfg.num_teachers);
  parallel_for(static_cast<size_t>(cfg.num_teachers), workers, [&](size_t t) {
    const std::vector<Tensor> xs = gather_examples(priv, slices[t]);
    const std::vector<int> ys = gather_labels(priv.labels, slices[t]);
    TrainConfig tc = cfg.teacher_train;
    tc.seed = derive_seed(cfg.master_seed, "teacher", t);
    switch (cfg.teacher_kind) {
      case TeacherKind::kVisualPrompt:
        teachers[t] = train_reteacher(xs, ys, source, cfg.prompt_spec(),
                                      cfg.map_kind, cfg.target.classes, tc);
        break;
      case TeacherKind::kScratch:
        teachers[t] = train_scratch_classifier(xs, ys, cfg.target_arch(), tc);
        break;
      case TeacherKind::kTransfer:
        teachers[t] = train_head_tuned(xs, ys, source, cfg.target.classes, tc);
        break;
    }
  });
  source.assert_unchanged();

  std::vector<TeacherFn> teacher_fns;
  teacher_fns.reserve(teachers.size());
  for (const AnyTeacher& t : teachers) {
    teacher_fns.push_back([&t](const Tensor& x) { return any_predict(t, x); });
  }

  PrivacyLedger ledger;
  ledger.mode = cfg.accounting_mode;
  LabelingOptions labeling;
  labeling.noise_seed = derive_seed(cfg.master_seed, "gnmax", 0);
  labeling.workers = workers;
  std::ofstream audit_stream;
  if (!cfg.audit_path.empty()) {
    audit_stream.open(cfg.audit_path, std::ios::trunc);
    if (!audit_stream) {
      throw std::runtime_error("cannot open audit path: " + cfg.audit_path);
    }
    labeling.audit = &audit_stream;
  }
  const LabelingResult lab =
      label_query_pool(data.splits.public_pool, teacher_fns, cfg.gnmax,
                       cfg.max_queries, ledger, labeling);

  std::optional<DpBudget> budget;
  if (!cfg.accounting_off) budget = rdp_to_dp(ledger, cfg.delta);

  const Dataset& pool = data.splits.public_pool;
  const std::vector<Tensor> answered_xs =
      gather_examples(pool, lab.answered_indices);
  std::vector<bool> answered_mask(pool.size(), false);
  for (size_t i : lab.answered_indices) answered_mask[i] = true;
  std::vector<Tensor> unlabeled;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (!answered_mask[i]) unlabeled.push_back(pool.image(i));
  }

  std::vector<double> accuracies(cfg.repeats, 0.0);
  std::vector<uint64_t> repeat_seeds(cfg.repeats, 0);
  const int fit_workers = std::max(1, workers / std::max(1, cfg.repeats));
  parallel_for(static_cast<size_t>(cfg.repeats), workers, [&](size_t r) {
    const uint64_t seed_r = derive_seed(cfg.master_seed, "student", r);
    repeat_seeds[r] = seed_r;
    StudentConfig sc = cfg.student;
    sc.train.seed = seed_r;
    sc.train.workers = fit_workers;
    double acc = 0.0;
    if (cfg.student_kind == StudentKind::kVisualPrompt) {
      const ReTeacher stu =
          train_student(answered_xs, lab.noisy_labels, unlabeled, source,
                        cfg.prompt_spec(), cfg.map_kind, cfg.target.classes, sc);
      acc = evaluate([&stu](const Tensor& x) { return stu.predict(x); },
                     data.splits.test);
    } else {
      const ScratchModel stu = train_scratch_student(
          answered_xs, lab.noisy_labels, unlabeled, cfg.target_arch(), sc);
      acc = evaluate([&stu](const Tensor& x) { return stu.predict(x); },
                     data.splits.test);
    }
    accuracies[r] = 100.0 * acc;
  });
  source.assert_unchanged();

  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= static_cast<double>(accuracies.size());
  double var = 0.0;
  for (double a : accuracies) var += (a - mean) * (a - mean);
  var /= static_cast<double>(accuracies.size());

  ExperimentReport report;
  if (budget) {
    report.epsilon = budget->epsilon;
    report.alpha_star = budget->alpha_star.alpha;
  }
  report.delta = cfg.delta;
  report.accounting_mode =
      cfg.accounting_off ? "off" : to_string(cfg.accounting_mode);
  report.queries = lab.queries;
  report.answered_queries = lab.answered;
  report.answer_accuracy_pct = lab.answer_accuracy_pct;
  report.threshold = cfg.gnmax.threshold;
  report.sigma1 = cfg.gnmax.sigma1;
  report.sigma2 = cfg.gnmax.sigma2;
  report.num_teachers = cfg.num_teachers;
  report.source_test_accuracy_pct = 100.0 * source.source_test_accuracy();
  report.accuracy_mean_pct = mean;
  report.accuracy_std_pct = std::sqrt(var);
  report.per_repeat_accuracy_pct = accuracies;
  report.per_repeat_seeds = repeat_seeds;
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

namespace {

void set_axis(ExperimentConfig& cfg, const std::string& axis,
              const json& value) {
  try {
    if (axis == "num_teachers") {
      cfg.num_teachers = value.get<int>();
    } else if (axis == "max_queries") {
      cfg.max_queries = value.get<size_t>();
    } else if (axis == "threshold") {
      cfg.gnmax.threshold = value.get<double>();
    } else if (axis == "sigma1") {
      cfg.gnmax.sigma1 = value.get<double>();
    } else if (axis == "sigma2") {
      cfg.gnmax.sigma2 = value.get<double>();
    } else if (axis == "masked") {
      cfg.masked = value.get<bool>();
    } else if (axis == "map_kind") {
      cfg.map_kind = map_kind_from_string(value.get<std::string>());
    } else if (axis == "rescale") {
      cfg.rescale_h = value.get<int>();
      cfg.rescale_w = value.get<int>();
    } else if (axis == "gap_knob") {
      cfg.target.gap_knob = value.get<double>();
    } else if (axis == "teacher_kind") {
      cfg.teacher_kind = teacher_kind_from_string(value.get<std::string>());
    } else if (axis == "student_kind") {
      cfg.student_kind = student_kind_from_string(value.get<std::string>());
    } else if (axis == "confidence_threshold") {
      cfg.student.confidence_threshold = value.get<double>();
    } else if (axis == "repeats") {
      cfg.repeats = value.get<int>();
    } else {
      throw ConfigError("unknown sweep axis: " + axis);
    }
  } catch (const json::exception&) {
    throw ConfigError("sweep value " + value.dump() +
                      " has the wrong type for axis " + axis);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("sweep axis " + axis + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> sweep_axes() {
  return {"num_teachers", "max_queries", "threshold", "sigma1",
          "sigma2",       "masked",      "map_kind",  "rescale",
          "gap_knob",     "teacher_kind", "student_kind",
          "confidence_threshold", "repeats"};
}

std::vector<ExperimentReport> run_sweep(const ExperimentConfig& base,
                                        const std::string& axis,
                                        const std::vector<json>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<ExperimentReport> reports;
  reports.reserve(values.size());
  for (const json& v : values) {
    ExperimentConfig cfg = base;
    set_axis(cfg, axis, v);
    reports.push_back(run_experiment(cfg));
  }
  return reports;
}

std::string report_csv_header() {
  return "axis,value,epsilon,alpha_star,queries,answered_queries,"
         "answer_accuracy_pct,threshold,sigma1,sigma2,num_teachers,"
         "accuracy_mean_pct,accuracy_std_pct";
}

std::string report_csv_row(const std::string& axis, const json& value,
                           const ExperimentReport& report) {
  std::ostringstream out;
  const json j = report.to_json(false);
  out << axis << ',' << value.dump() << ','
      << j["epsilon"].dump() << ',' << j["alpha_star"].dump() << ','
      << report.queries << ',' << report.answered_queries << ','
      << j["answer_accuracy_pct"].dump() << ',' << report.threshold << ','
      << report.sigma1 << ',' << report.sigma2 << ',' << report.num_teachers
      << ',' << j["accuracy_mean_pct"].dump() << ','
      << j["accuracy_std_pct"].dump();
  return out.str();
}

namespace {

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    throw std::runtime_error("malformed JSON in " + path.string());
  }
  return j;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds,
                  const json& manifest_extra) {
  std::filesystem::create_directories(dir);
  save_tensor(dir / "images.ptns", ds.images, PtnsDtype::kF64);
  save_labels(dir / "labels.ptns", ds.labels);
  json manifest;
  manifest["num_classes"] = ds.num_classes;
  manifest["split"] = to_string(ds.split);
  manifest["provenance"] = ds.provenance;
  manifest["count"] = ds.size();
  if (manifest_extra.is_object()) {
    for (auto it = manifest_extra.begin(); it != manifest_extra.end(); ++it) {
      manifest[it.key()] = it.value();
    }
  }
  write_json_file(dir / "manifest.json", manifest);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  Dataset ds;
  ds.images = load_tensor(dir / "images.ptns");
  ds.labels = load_labels(dir / "labels.ptns");
  ds.num_classes = manifest.at("num_classes").get<int>();
  ds.provenance = manifest.value("provenance", 0ULL);
  const std::string split = manifest.value("split", "unsplit");
  if (split == "private-train") ds.split = Split::kPrivateTrain;
  else if (split == "public-pool") ds.split = Split::kPublicPool;
  else if (split == "test") ds.split = Split::kTest;
  else ds.split = Split::kUnsplit;
  ds.validate();
  return ds;
}

void save_source_checkpoint(const std::filesystem::path& dir,
                            const FrozenSourceModel& model) {
  std::filesystem::create_directories(dir);
  const ArchSpec& arch = model.arch();
  json manifest;
  manifest["arch"] = {{"in_channels", arch.in_channels},
                      {"in_h", arch.in_h},
                      {"in_w", arch.in_w},
                      {"conv_channels", arch.conv_channels},
                      {"kernel", arch.kernel},
                      {"stride", arch.stride},
                      {"pad", arch.pad},
                      {"num_classes", arch.num_classes}};
  manifest["fingerprint"] = model.fingerprint();
  manifest["source_test_accuracy"] = model.source_test_accuracy();

  const auto params = model.net().params();
  json shapes = json::array();
  for (size_t i = 0; i < params.size(); ++i) {
    save_tensor(dir / ("param_" + std::to_string(i) + ".ptns"), *params[i],
                PtnsDtype::kF64);
    shapes.push_back(params[i]->shape());
  }
  manifest["param_shapes"] = shapes;
  write_json_file(dir / "manifest.json", manifest);
}

FrozenSourceModel load_source_checkpoint(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  const json& a = manifest.at("arch");
  ArchSpec arch;
  arch.in_channels = a.at("in_channels").get<int>();
  arch.in_h = a.at("in_h").get<int>();
  arch.in_w = a.at("in_w").get<int>();
  arch.conv_channels = a.at("conv_channels").get<std::vector<int>>();
  arch.kernel = a.at("kernel").get<int>();
  arch.stride = a.at("stride").get<int>();
  arch.pad = a.at("pad").get<int>();
  arch.num_classes = a.at("num_classes").get<int>();

  SourceNet net(arch, 0);
  const auto params = net.params();
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor loaded =
        load_tensor(dir / ("param_" + std::to_string(i) + ".ptns"));
    if (loaded.shape() != params[i]->shape()) {
      throw std::runtime_error("checkpoint tensor shape mismatch at index " +
                               std::to_string(i));
    }
    *params[i] = loaded;
  }
  FrozenSourceModel model(std::move(net),
                          manifest.at("source_test_accuracy").get<double>());
  if (model.fingerprint() != manifest.at("fingerprint").get<uint64_t>()) {
    throw std::runtime_error("checkpoint fingerprint mismatch");
  }
  return model;
}

}  // namespace prompate
