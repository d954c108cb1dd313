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
#include "prompate/aggregator.hpp"

#include <stdexcept>

#include "prompate/parallel.hpp"

namespace prompate {

uint64_t VoteHistogram::total() const {
  uint64_t t = 0;
  for (uint64_t c : counts) t += c;
  return t;
}

void GnMaxParams::validate() const {
  if (sigma1 < 0.0 || sigma2 < 0.0) {
    throw std::invalid_argument("gnmax noise scales must be >= 0");
  }
}

VoteHistogram tally(const std::vector<int>& predictions, int num_classes) {
  if (predictions.empty()) {
    throw std::invalid_argument("cannot tally an empty prediction vector");
  }
  if (num_classes < 2) throw std::invalid_argument("need at least two classes");
  VoteHistogram hist;
  hist.counts.assign(num_classes, 0);
  for (int p : predictions) {
    if (p < 0 || p >= num_classes) {
      throw std::invalid_argument("prediction class index out of range");
    }
    ++hist.counts[p];
  }
  return hist;
}

AggregateOutcome confident_gnmax(const VoteHistogram& hist,
                                 const GnMaxParams& params,
                                 RandomStream& noise) {
  params.validate();
  if (hist.counts.size() < 2) {
    throw std::invalid_argument("vote histogram needs at least two classes");
  }
  const double gate_noise = noise.gaussian();
  uint64_t max_count = hist.counts[0];
  for (uint64_t c : hist.counts) max_count = std::max(max_count, c);

  double best_score = 0.0;
  int best_class = -1;
  for (size_t j = 0; j < hist.counts.size(); ++j) {
    const double score =
        static_cast<double>(hist.counts[j]) + params.sigma2 * noise.gaussian();
    if (best_class < 0 || score > best_score) {
      best_score = score;
      best_class = static_cast<int>(j);
    }
  }

  const double gate =
      static_cast<double>(max_count) + params.sigma1 * gate_noise;
  if (gate >= params.threshold) return best_class;
  return std::nullopt;
}

LabelingResult label_query_pool(const Dataset& pool,
                                const std::vector<TeacherFn>& teachers,
                                const GnMaxParams& params, size_t max_queries,
                                PrivacyLedger& ledger,
                                const LabelingOptions& options) {
  params.validate();
  if (teachers.empty()) throw std::invalid_argument("teacher ensemble is empty");
  if (max_queries > pool.size()) {
    throw std::invalid_argument("query budget exceeds pool size");
  }
  if (!ledger.empty() &&
      (ledger.sigma1 != params.sigma1 || ledger.sigma2 != params.sigma2)) {
    throw std::invalid_argument("ledger noise scales do not match parameters");
  }
  ledger.sigma1 = params.sigma1;
  ledger.sigma2 = params.sigma2;

  std::vector<AggregateOutcome> outcomes(max_queries);
  parallel_for(max_queries, options.workers, [&](size_t q) {
    const Tensor x = pool.image(q);
    std::vector<int> preds(teachers.size());
    for (size_t t = 0; t < teachers.size(); ++t) preds[t] = teachers[t](x);
    const VoteHistogram hist = tally(preds, pool.num_classes);
    RandomStream noise(derive_seed(options.noise_seed, "gnmax-query", q));
    outcomes[q] = confident_gnmax(hist, params, noise);
  });

  LabelingResult result;
  result.queries = max_queries;
  uint64_t correct = 0;
  for (size_t q = 0; q < max_queries; ++q) {
    ++ledger.threshold_checks;
    if (outcomes[q].has_value()) {
      ++ledger.answered;
      result.answered_indices.push_back(q);
      result.noisy_labels.push_back(*outcomes[q]);
      if (*outcomes[q] == pool.labels[q]) ++correct;
      if (options.audit) {
        *options.audit << "{\"query\":" << q << ",\"outcome\":\"answered\""
                       << ",\"label\":" << *outcomes[q] << "}\n";
      }
    } else if (options.audit) {
      *options.audit << "{\"query\":" << q << ",\"outcome\":\"abstained\"}\n";
    }
  }
  result.answered = result.answered_indices.size();
  result.answer_accuracy_pct =
      result.answered == 0
          ? 0.0
          : 100.0 * static_cast<double>(correct) /
                static_cast<double>(result.answered);
  return result;
}

}  // namespace prompate
