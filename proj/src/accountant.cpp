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
#include "prompate/accountant.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace prompate {

namespace {

constexpr double kMaxOrder = 512.0;
constexpr int kGridPoints = 200;

void check_order(const RdpOrder& order) {
  if (!(order.alpha > 1.0) || !std::isfinite(order.alpha)) {
    throw std::invalid_argument("rdp order alpha must be finite and > 1");
  }
}

void check_delta(double delta) {
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw std::invalid_argument("delta must lie in the open interval (0, 1)");
  }
}

void check_ledger(const PrivacyLedger& ledger) {
  if (ledger.answered > ledger.threshold_checks) {
    throw std::invalid_argument("ledger answered exceeds threshold_checks");
  }
  const bool charge_checks =
      ledger.mode == AccountingMode::kPerStep && ledger.threshold_checks > 0;
  if (charge_checks && !(ledger.sigma1 > 0.0)) {
    throw std::invalid_argument("ledger sigma1 must be > 0");
  }
  if (ledger.answered > 0 && !(ledger.sigma2 > 0.0)) {
    throw std::invalid_argument("ledger sigma2 must be > 0");
  }
}

// compose_ledger is linear in alpha; this is its slope.
double rdp_slope(const PrivacyLedger& ledger) {
  double slope = 0.0;
  if (ledger.mode == AccountingMode::kPerStep && ledger.threshold_checks > 0) {
    slope += static_cast<double>(ledger.threshold_checks) /
             (2.0 * ledger.sigma1 * ledger.sigma1);
  }
  if (ledger.answered > 0) {
    slope += static_cast<double>(ledger.answered) /
             (2.0 * ledger.sigma2 * ledger.sigma2);
  }
  return slope;
}

}  // namespace

std::string to_string(AccountingMode mode) {
  return mode == AccountingMode::kPerStep ? "per-step" : "paper-simple";
}

AccountingMode accounting_mode_from_string(const std::string& s) {
  if (s == "per-step") return AccountingMode::kPerStep;
  if (s == "paper-simple") return AccountingMode::kPaperSimple;
  throw std::invalid_argument("unknown accounting mode: " + s);
}

double gaussian_rdp(const GaussianMechanism& mech, const RdpOrder& order) {
  if (!(mech.sigma > 0.0)) {
    throw std::invalid_argument("gaussian mechanism sigma must be > 0");
  }
  if (!(mech.sensitivity > 0.0)) {
    throw std::invalid_argument("gaussian mechanism sensitivity must be > 0");
  }
  check_order(order);
  return order.alpha * mech.sensitivity * mech.sensitivity /
         (2.0 * mech.sigma * mech.sigma);
}

double compose_ledger(const PrivacyLedger& ledger, const RdpOrder& order) {
  check_order(order);
  check_ledger(ledger);
  return rdp_slope(ledger) * order.alpha;
}

std::vector<RdpOrder> default_order_grid() {
  std::vector<RdpOrder> grid;
  grid.reserve(kGridPoints);
  const double lo = std::log(0.01);          // alpha = 1.01
  const double hi = std::log(kMaxOrder - 1);  // alpha = 512
  for (int i = 0; i < kGridPoints; ++i) {
    const double t = static_cast<double>(i) / (kGridPoints - 1);
    grid.push_back({1.0 + std::exp(lo + t * (hi - lo))});
  }
  return grid;
}

DpBudget rdp_to_dp(const PrivacyLedger& ledger, double delta,
                   const std::vector<RdpOrder>& orders) {
  check_delta(delta);
  check_ledger(ledger);
  if (orders.empty()) {
    throw std::invalid_argument("order grid must be non-empty");
  }
  for (const RdpOrder& o : orders) check_order(o);

  if (ledger.empty()) {
    double max_alpha = orders.front().alpha;
    for (const RdpOrder& o : orders) max_alpha = std::max(max_alpha, o.alpha);
    return {0.0, delta, {max_alpha}};
  }

  const double log_inv_delta = std::log(1.0 / delta);
  const double slope = rdp_slope(ledger);

  std::vector<RdpOrder> candidates = orders;
  if (slope > 0.0) {
    // Analytic minimizer of slope*alpha + log(1/delta)/(alpha-1).
    candidates.push_back({1.0 + std::sqrt(log_inv_delta / slope)});
  }

  DpBudget best{std::numeric_limits<double>::infinity(), delta, {2.0}};
  for (const RdpOrder& order : candidates) {
    const double eps =
        slope * order.alpha + log_inv_delta / (order.alpha - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.alpha_star = order;
    }
  }
  return best;
}

ClosedFormEps closed_form_eps(uint64_t count, double sigma, double delta) {
  if (count == 0) throw std::invalid_argument("count must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  check_delta(delta);
  const double log_inv_delta = std::log(1.0 / delta);
  const double n = static_cast<double>(count);
  ClosedFormEps out;
  out.alpha_star = 1.0 + std::sqrt(2.0 * sigma * sigma * log_inv_delta / n);
  out.epsilon = n / (2.0 * sigma * sigma) +
                std::sqrt(2.0 * n * log_inv_delta) / sigma;
  return out;
}

}  // namespace prompate
