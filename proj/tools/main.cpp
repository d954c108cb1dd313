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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prompate/harness.hpp"

namespace {

using nlohmann::json;
using namespace prompate;

json read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("malformed JSON in config file: " + path);
  return j;
}

void emit_json(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out_path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write output file: " + out_path);
  f << j.dump(2) << "\n";
}

std::vector<json> parse_values(const std::string& csv) {
  std::vector<json> values;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    json v = json::parse(tok, nullptr, /*allow_exceptions=*/false);
    values.push_back(v.is_discarded() ? json(tok) : v);
  }
  if (values.empty()) throw ConfigError("--values must list at least one value");
  return values;
}

struct RunFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_path;
  std::string audit_path;
  uint64_t seed = 0;
  bool seed_set = false;
  int workers = -1;
};

ExperimentConfig load_run_config(const RunFlags& flags) {
  json raw = read_config_file(flags.config_path);
  for (const std::string& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got: " + kv);
    }
    apply_override(raw, kv.substr(0, eq), kv.substr(eq + 1));
  }
  const bool config_has_seed = raw.contains("master_seed");
  ExperimentConfig cfg = config_from_json(raw);
  if (flags.seed_set) {
    cfg.master_seed = flags.seed;
  } else if (!config_has_seed) {
    if (const char* env = std::getenv("PROMPATE_SEED")) {
      try {
        cfg.master_seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError("PROMPATE_SEED is not a valid integer: " +
                          std::string(env));
      }
    }
  }
  if (flags.workers >= 0) cfg.workers = flags.workers;
  if (!flags.audit_path.empty()) cfg.audit_path = flags.audit_path;
  return cfg;
}

int dispatch(CLI::App& app, const RunFlags& run_flags,
             const RunFlags& sweep_flags, const std::string& sweep_axis,
             const std::string& sweep_values, const std::string& sweep_csv,
             // account
             uint64_t acc_queries, uint64_t acc_answered, double acc_sigma1,
             double acc_sigma2, double acc_delta, const std::string& acc_mode,
             const std::string& acc_config,
             // gen-data
             SyntheticSpec gen_spec, const std::string& gen_family,
             const std::string& gen_out,
             // train-source
             const std::string& ts_config, const std::string& ts_out,
             // report
             const std::string& rep_in, bool rep_csv) {
  if (app.got_subcommand("account")) {
    PrivacyLedger ledger;
    ledger.threshold_checks = acc_queries;
    ledger.answered = acc_answered;
    ledger.sigma1 = acc_sigma1;
    ledger.sigma2 = acc_sigma2;
    ledger.mode = accounting_mode_from_string(acc_mode);
    double delta = acc_delta;
    if (!acc_config.empty()) {
      const json j = read_config_file(acc_config);
      if (j.contains("queries")) ledger.threshold_checks = j.at("queries").get<uint64_t>();
      if (j.contains("threshold_checks")) {
        ledger.threshold_checks = j.at("threshold_checks").get<uint64_t>();
      }
      if (j.contains("answered")) ledger.answered = j.at("answered").get<uint64_t>();
      if (j.contains("sigma1")) ledger.sigma1 = j.at("sigma1").get<double>();
      if (j.contains("sigma2")) ledger.sigma2 = j.at("sigma2").get<double>();
      if (j.contains("delta")) delta = j.at("delta").get<double>();
      if (j.contains("mode")) {
        ledger.mode = accounting_mode_from_string(j.at("mode").get<std::string>());
      }
    }
    const DpBudget budget = rdp_to_dp(ledger, delta);
    json out;
    out["epsilon"] = std::round(budget.epsilon * 1e4) / 1e4;
    out["alpha_star"] = std::round(budget.alpha_star.alpha * 1e4) / 1e4;
    out["delta"] = delta;
    out["mode"] = to_string(ledger.mode);
    out["threshold_checks"] = ledger.threshold_checks;
    out["answered"] = ledger.answered;
    out["sigma1"] = ledger.sigma1;
    out["sigma2"] = ledger.sigma2;
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  if (app.got_subcommand("gen-data")) {
    SyntheticSpec spec = gen_spec;
    spec.family = pattern_family_from_string(gen_family);
    const Dataset ds = generate(spec);
    json extra;
    extra["spec"] = {{"classes", spec.classes},
                     {"channels", spec.channels},
                     {"height", spec.height},
                     {"width", spec.width},
                     {"family", to_string(spec.family)},
                     {"gap_knob", spec.gap_knob},
                     {"noise_level", spec.noise_level},
                     {"count", spec.count},
                     {"seed", spec.seed}};
    save_dataset(gen_out, ds, extra);
    json out;
    out["out"] = gen_out;
    out["count"] = ds.size();
    out["provenance"] = ds.provenance;
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  if (app.got_subcommand("train-source")) {
    const json raw = read_config_file(ts_config);
    const ExperimentConfig cfg = config_from_json(raw);
    SyntheticSpec spec = cfg.source;
    spec.seed = derive_seed(cfg.master_seed, "source-data", 0);
    const Dataset source_ds = generate(spec);
    TrainConfig tc = cfg.source_train;
    tc.seed = derive_seed(cfg.master_seed, "source-train", 0);
    const FrozenSourceModel model = train_source(source_ds, cfg.source_arch(), tc);
    save_source_checkpoint(ts_out, model);
    json out;
    out["out"] = ts_out;
    out["fingerprint"] = model.fingerprint();
    out["source_test_accuracy_pct"] =
        std::round(10000.0 * model.source_test_accuracy()) / 100.0;
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  if (app.got_subcommand("run")) {
    const ExperimentConfig cfg = load_run_config(run_flags);
    const ExperimentReport report = run_experiment(cfg);
    emit_json(report.to_json(), run_flags.out_path);
    return 0;
  }

  if (app.got_subcommand("sweep")) {
    const ExperimentConfig base = load_run_config(sweep_flags);
    const std::vector<json> values = parse_values(sweep_values);
    const std::vector<ExperimentReport> reports = run_sweep(base, sweep_axis, values);
    json arr = json::array();
    for (const ExperimentReport& r : reports) arr.push_back(r.to_json());
    emit_json(arr, sweep_flags.out_path);
    if (!sweep_csv.empty()) {
      const bool fresh = !std::filesystem::exists(sweep_csv);
      std::ofstream csv(sweep_csv, std::ios::app);
      if (!csv) throw std::runtime_error("cannot open csv file: " + sweep_csv);
      if (fresh) csv << report_csv_header() << "\n";
      for (size_t i = 0; i < reports.size(); ++i) {
        csv << report_csv_row(sweep_axis, values[i], reports[i]) << "\n";
      }
    }
    return 0;
  }

  if (app.got_subcommand("report")) {
    std::ifstream f(rep_in);
    if (!f) throw ConfigError("cannot open report file: " + rep_in);
    json j = json::parse(f, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("malformed JSON in report file: " + rep_in);
    try {
      verify_report_epsilon(j);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("report self-audit failed: ") + e.what());
    }
    if (rep_csv) {
      ExperimentReport r;
      if (!j.at("epsilon").is_null()) r.epsilon = j.at("epsilon").get<double>();
      if (!j.at("alpha_star").is_null()) r.alpha_star = j.at("alpha_star").get<double>();
      r.queries = j.at("queries").get<uint64_t>();
      r.answered_queries = j.at("answered_queries").get<uint64_t>();
      r.answer_accuracy_pct = j.at("answer_accuracy_pct").get<double>();
      r.threshold = j.at("threshold").get<double>();
      r.sigma1 = j.at("sigma1").get<double>();
      r.sigma2 = j.at("sigma2").get<double>();
      r.num_teachers = j.at("num_teachers").get<int>();
      r.accuracy_mean_pct = j.at("accuracy_mean_pct").get<double>();
      r.accuracy_std_pct = j.at("accuracy_std_pct").get<double>();
      std::cout << report_csv_header() << "\n"
                << report_csv_row("-", json(nullptr), r) << "\n";
    } else {
      std::cout << j.dump(2) << "\n";
    }
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private ensemble distillation with visual prompts over a frozen source model"};
  app.require_subcommand(1);

  // account
  auto* account = app.add_subcommand("account", "Convert a query ledger to (epsilon, delta)-DP");
  uint64_t acc_queries = 0, acc_answered = 0;
  double acc_sigma1 = 0.0, acc_sigma2 = 0.0, acc_delta = 1e-5;
  std::string acc_mode = "per-step", acc_config;
  account->add_option("--queries", acc_queries, "Threshold checks issued");
  account->add_option("--answered", acc_answered, "Answered queries");
  account->add_option("--sigma1", acc_sigma1, "Gate noise scale");
  account->add_option("--sigma2", acc_sigma2, "Answer noise scale");
  account->add_option("--delta", acc_delta, "Target delta (default 1e-5)");
  account->add_option("--mode", acc_mode, "per-step | paper-simple");
  account->add_option("--config", acc_config, "JSON file with ledger fields");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  SyntheticSpec gen_spec;
  std::string gen_family = "blobs", gen_out = "dataset";
  gen->add_option("--classes", gen_spec.classes, "Class count");
  gen->add_option("--channels", gen_spec.channels, "Image channels");
  gen->add_option("--height", gen_spec.height, "Image height");
  gen->add_option("--width", gen_spec.width, "Image width");
  gen->add_option("--family", gen_family, "blobs | stripes | checker");
  gen->add_option("--gap", gen_spec.gap_knob, "Domain gap knob in [0, 1]");
  gen->add_option("--noise", gen_spec.noise_level, "Pixel noise level");
  gen->add_option("--count", gen_spec.count, "Example count");
  gen->add_option("--seed", gen_spec.seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train-source
  auto* ts = app.add_subcommand("train-source", "Train and checkpoint the frozen source model");
  std::string ts_config, ts_out = "source-checkpoint";
  ts->add_option("--config", ts_config, "Experiment config JSON")->required();
  ts->add_option("--out", ts_out, "Checkpoint directory")->required();

  // run
  auto* run = app.add_subcommand("run", "Run the full pipeline and print a report");
  RunFlags run_flags;
  run->add_option("--config", run_flags.config_path, "Experiment config JSON")->required();
  run->add_option("--set", run_flags.overrides, "Override config key: dotted.key=value");
  run->add_option("--out", run_flags.out_path, "Write report JSON here instead of stdout");
  auto* run_seed = run->add_option("--seed", run_flags.seed, "Master seed override");
  run->add_option("--workers", run_flags.workers, "Worker pool size (default: logical cores)");
  run->add_option("--audit", run_flags.audit_path, "Per-query JSONL audit file");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of a swept axis");
  RunFlags sweep_flags;
  std::string sweep_axis, sweep_values, sweep_csv;
  sweep->add_option("--config", sweep_flags.config_path, "Experiment config JSON")->required();
  sweep->add_option("--set", sweep_flags.overrides, "Override config key: dotted.key=value");
  sweep->add_option("--axis", sweep_axis, "Swept parameter name")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values")->required();
  sweep->add_option("--out", sweep_flags.out_path, "Write report array here instead of stdout");
  auto* sweep_seed = sweep->add_option("--seed", sweep_flags.seed, "Master seed override");
  sweep->add_option("--workers", sweep_flags.workers, "Worker pool size");
  sweep->add_option("--csv", sweep_csv, "Append one CSV row per report");

  // report
  auto* rep = app.add_subcommand("report", "Self-audit and display a saved report");
  std::string rep_in;
  bool rep_csv = false;
  rep->add_option("--in", rep_in, "Report JSON file")->required();
  rep->add_flag("--csv", rep_csv, "Print as a CSV row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  run_flags.seed_set = run_seed->count() > 0;
  sweep_flags.seed_set = sweep_seed->count() > 0;

  try {
    return dispatch(app, run_flags, sweep_flags, sweep_axis, sweep_values,
                    sweep_csv, acc_queries, acc_answered, acc_sigma1,
                    acc_sigma2, acc_delta, acc_mode, acc_config, gen_spec,
                    gen_family, gen_out, ts_config, ts_out, rep_in, rep_csv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}
