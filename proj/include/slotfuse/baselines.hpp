// Ensemble baselines the stacker is measured against: union, voting at a
// threshold, a threshold learned on training data, and the oracle threshold
// picked with test labels.
#pragma once

#include <string>
#include <vector>

#include "slotfuse/core.hpp"
#include "slotfuse/ingest.hpp"
#include "slotfuse/scorer.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

// All candidates on LIST slots; on SINGLE slots only the fill whose best
// per-system confidence is highest (ties to the smallest fill_norm).
std::vector<Candidate> union_ensemble(const std::vector<Candidate>& candidates,
                                      const SlotRegistry& registry);

// Candidates backed by at least k systems, with SINGLE-slot conflicts
// resolved as in union among the survivors.
std::vector<Candidate> voting_ensemble(const std::vector<Candidate>& candidates, int k,
                                       const SlotRegistry& registry);

// Smallest k in 1..pool_size maximizing F1 of voting_ensemble against the
// key (official scope, no aliasing).
int learn_threshold(const std::vector<Candidate>& candidates, const std::vector<KeyEntry>& key,
                    int pool_size, const SlotRegistry& registry);

struct PrPoint {
  int k = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per k = 1..pool size

  std::string to_csv() const;
};

// Full sweep over k with the test key: the unfair upper bound for voting.
std::pair<int, PrCurve> oracle_threshold(const std::vector<Candidate>& candidates,
                                         const std::vector<KeyEntry>& key, int pool_size,
                                         const SlotRegistry& registry);

// Selected candidates as run-file lines under the given run id, each line
// the candidate's best response with its confidence.
std::vector<ResponseLine> to_run_lines(const std::vector<Candidate>& selected,
                                       const std::string& run_id);

}  // namespace slotfuse
