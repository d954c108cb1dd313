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
#include <string>
#include <vector>

namespace prompate {

// Renyi divergence order; must be finite and strictly greater than 1.
struct RdpOrder {
  double alpha = 2.0;
};

struct GaussianMechanism {
  double sigma = 1.0;
  double sensitivity = 1.0;
};

// How threshold checks are charged when composing the ledger:
//   PerStep     - every noisy threshold check costs alpha/(2*sigma1^2) and
//                 every answered query costs alpha/(2*sigma2^2). Default;
//                 never under-reports.
//   PaperSimple - only answered queries are charged, at sigma2.
enum class AccountingMode { kPerStep, kPaperSimple };

std::string to_string(AccountingMode mode);
AccountingMode accounting_mode_from_string(const std::string& s);

// Record of noisy-mechanism invocations for one run. Counts only grow;
// answered never exceeds threshold_checks.
struct PrivacyLedger {
  uint64_t threshold_checks = 0;
  uint64_t answered = 0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  AccountingMode mode = AccountingMode::kPerStep;

  bool empty() const { return threshold_checks == 0 && answered == 0; }
};

struct DpBudget {
  double epsilon = 0.0;
  double delta = 0.0;
  RdpOrder alpha_star;
};

// RDP cost of one Gaussian mechanism invocation at the given order:
// alpha * sensitivity^2 / (2 * sigma^2).
double gaussian_rdp(const GaussianMechanism& mech, const RdpOrder& order);

// Total RDP of the ledger at one order, per the ledger's accounting mode.
double compose_ledger(const PrivacyLedger& ledger, const RdpOrder& order);

// 200 orders log-spaced in (1, 512].
std::vector<RdpOrder> default_order_grid();

// Converts the composed ledger to (epsilon, delta)-DP by minimizing
// compose(alpha) + ln(1/delta)/(alpha - 1) over the grid augmented with the
// analytic optimum. An empty ledger yields epsilon = 0 exactly.
DpBudget rdp_to_dp(const PrivacyLedger& ledger, double delta,
                   const std::vector<RdpOrder>& orders = default_order_grid());

struct ClosedFormEps {
  double epsilon = 0.0;
  double alpha_star = 0.0;
};

// Analytic minimizer for a single noise scale: the objective
// count*alpha/(2 sigma^2) + ln(1/delta)/(alpha-1) is minimized at
// alpha* = 1 + sqrt(2 sigma^2 ln(1/delta) / count), giving
// epsilon = count/(2 sigma^2) + sqrt(2 count ln(1/delta)) / sigma.
ClosedFormEps closed_form_eps(uint64_t count, double sigma, double delta);

}  // namespace prompate
