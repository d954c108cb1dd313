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
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "prompate/accountant.hpp"
#include "prompate/data.hpp"
#include "prompate/rng.hpp"
#include "prompate/tensor.hpp"

namespace prompate {

// Per-class teacher vote counts for one query.
struct VoteHistogram {
  std::vector<uint64_t> counts;

  uint64_t total() const;
  size_t num_classes() const { return counts.size(); }
};

struct GnMaxParams {
  double threshold = 0.0;
  double sigma1 = 0.0;  // gate noise; zero only for deterministic testing
  double sigma2 = 0.0;  // answer noise

  void validate() const;
};

// Answered class index, or abstention.
using AggregateOutcome = std::optional<int>;

VoteHistogram tally(const std::vector<int>& predictions, int num_classes);

// Noisy confidence gate then noisy argmax. Consumes exactly 1 + K gaussian
// draws from the stream regardless of outcome, so stream positions stay
// schedule-independent. Ties break toward the lowest class index.
AggregateOutcome confident_gnmax(const VoteHistogram& hist,
                                 const GnMaxParams& params,
                                 RandomStream& noise);

using TeacherFn = std::function<int(const Tensor&)>;

struct LabelingOptions {
  uint64_t noise_seed = 0;
  int workers = 1;
  std::ostream* audit = nullptr;  // JSONL, one record per query
};

struct LabelingResult {
  std::vector<size_t> answered_indices;  // indices into the pool
  std::vector<int> noisy_labels;         // aligned with answered_indices
  uint64_t queries = 0;
  uint64_t answered = 0;
  double answer_accuracy_pct = 0.0;  // vs held ground truth; reporting only
};

// Labels the first max_queries pool items in index order. Teacher fan-out
// runs on the worker pool; gate noise comes from a query-index-keyed stream,
// so results are identical for any worker count. The ledger gains one
// threshold check per query and one answered count per returned label.
LabelingResult label_query_pool(const Dataset& pool,
                                const std::vector<TeacherFn>& teachers,
                                const GnMaxParams& params, size_t max_queries,
                                PrivacyLedger& ledger,
                                const LabelingOptions& options);

}  // namespace prompate
