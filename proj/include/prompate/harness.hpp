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

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prompate/accountant.hpp"
#include "prompate/aggregator.hpp"
#include "prompate/data.hpp"
#include "prompate/nn.hpp"
#include "prompate/prompt.hpp"

namespace prompate {

// Configuration or input-validation problem; the CLI maps this to exit 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TeacherKind { kVisualPrompt, kScratch, kTransfer };
enum class StudentKind { kVisualPrompt, kScratch };

std::string to_string(TeacherKind k);
std::string to_string(StudentKind k);
TeacherKind teacher_kind_from_string(const std::string& s);
StudentKind student_kind_from_string(const std::string& s);

struct ExperimentConfig {
  uint64_t master_seed = 1;
  int repeats = 3;
  int workers = 0;  // 0 = logical cores

  SyntheticSpec source;       // seed is derived from master_seed
  TrainConfig source_train;
  std::vector<int> conv_channels = {8, 16};
  SyntheticSpec target;
  double public_frac = 0.2;
  double test_frac = 0.1;

  int num_teachers = 10;
  TeacherKind teacher_kind = TeacherKind::kVisualPrompt;
  StudentKind student_kind = StudentKind::kVisualPrompt;
  int rescale_h = 24;
  int rescale_w = 24;
  bool masked = true;
  MapKind map_kind = MapKind::kFc1;
  TrainConfig teacher_train;
  GnMaxParams gnmax;
  size_t max_queries = 200;
  double delta = 1e-5;
  bool accounting_off = false;
  AccountingMode accounting_mode = AccountingMode::kPerStep;
  StudentConfig student;
  std::string audit_path;

  void validate() const;  // throws ConfigError naming the offending key
  ArchSpec source_arch() const;
  ArchSpec target_arch() const;  // scratch teachers/students on target dims
  PromptSpec prompt_spec() const;
};

ExperimentConfig default_config();
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Applies `--set dotted.key=value` on the raw JSON before parsing.
void apply_override(nlohmann::json& j, const std::string& dotted_key,
                    const std::string& value);

struct ExperimentReport {
  std::optional<double> epsilon;  // absent when accounting is off
  std::optional<double> alpha_star;
  double delta = 0.0;
  std::string accounting_mode;
  uint64_t queries = 0;
  uint64_t answered_queries = 0;
  double answer_accuracy_pct = 0.0;
  double threshold = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  int num_teachers = 0;
  double source_test_accuracy_pct = 0.0;
  double accuracy_mean_pct = 0.0;
  double accuracy_std_pct = 0.0;
  std::vector<double> per_repeat_accuracy_pct;
  std::vector<uint64_t> per_repeat_seeds;
  double wall_time_sec = 0.0;

  // Stable key order; epsilon to 4 decimals, accuracies to 2. Wall time is
  // the one volatile field and can be left out for byte comparisons.
  nlohmann::json to_json(bool include_wall_time = true) const;
};

// Recomputes epsilon from the serialized ledger fields and checks it against
// the report's epsilon at the report's printed precision.
void verify_report_epsilon(const nlohmann::json& report);

// Generated datasets and the teacher slice assignment for a config; split
// out of run_experiment so sweeps can be checked for comparability.
struct PipelineData {
  Dataset source_dataset;
  SplitSets splits;
  PartitionPlan plan;
};

PipelineData prepare_data(const ExperimentConfig& cfg);

// Full pipeline: train source, partition, train teachers, label the pool
// privately, account, train the student `repeats` times (student phase is
// the only re-seeded stage), evaluate on the test split.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// One report per value; only the swept axis differs between runs.
std::vector<ExperimentReport> run_sweep(const ExperimentConfig& base,
                                        const std::string& axis,
                                        const std::vector<nlohmann::json>& values);

std::vector<std::string> sweep_axes();

std::string report_csv_header();
std::string report_csv_row(const std::string& axis,
                           const nlohmann::json& value,
                           const ExperimentReport& report);

// Dataset directory: images.ptns + labels.ptns + manifest.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds,
                  const nlohmann::json& manifest_extra = {});
Dataset load_dataset(const std::filesystem::path& dir);

// Source-model checkpoint: one PTNS file per parameter tensor plus a JSON
// manifest carrying the architecture, fingerprint, and source accuracy.
void save_source_checkpoint(const std::filesystem::path& dir,
                            const FrozenSourceModel& model);
FrozenSourceModel load_source_checkpoint(const std::filesystem::path& dir);

}  // namespace prompate
