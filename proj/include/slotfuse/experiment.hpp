// Train-on-A, test-on-B experiment driver comparing the stacker against the
// ensemble baselines, with learning-curve and incremental-system sweeps.
#pragma once

#include <set>
#include <string>
#include <vector>

#include "slotfuse/features.hpp"
#include "slotfuse/synth.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

enum class ExperimentMode { SINGLE, LEARNING_CURVE, INCREMENTAL };

struct ExperimentOptions {
  std::set<FeatureGroup> features = {FeatureGroup::CONF, FeatureGroup::DPS, FeatureGroup::OP,
                                     FeatureGroup::REL};
  double lambda = 0.01;
  bool tune = false;        // grid-search lambda on the training matrix instead
  double threshold = 0.5;   // stacker acceptance cutoff
  ExperimentMode mode = ExperimentMode::SINGLE;
  std::vector<double> fractions;  // learning-curve sizes; 0.1..1.0 when empty
  int jobs = 1;
};

// One evaluated configuration; every F1 is the official overall score on
// the test key.
struct ExperimentRow {
  std::string setting;
  std::size_t train_candidates = 0;
  double stacker_f1 = 0.0;
  double union_f1 = 0.0;
  double voting_f1 = 0.0;         // threshold learned on the train key
  double oracle_voting_f1 = 0.0;  // threshold picked with the test key
  double best_single_f1 = 0.0;
  std::string best_system;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;

  std::string to_csv() const;
};

// SINGLE: one row over the full bundles. LEARNING_CURVE: one row per train
// fraction (query-id prefix of the sorted train queries), full test set.
// INCREMENTAL: systems sorted by assessed-wrong fills on the train key,
// descending; row k uses the first k systems on both sides.
ExperimentReport run_experiment(const Bundle& train, const Bundle& test,
                                const ExperimentOptions& options, Diagnostics& diag);

}  // namespace slotfuse
