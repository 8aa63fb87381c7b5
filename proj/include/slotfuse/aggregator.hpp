// Confidence aggregation for systems without training history: per-team run
// merging, slot budgets estimated from a prior year, and the budgeted
// quadratic program that turns raw confidences into one ensemble run.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "slotfuse/core.hpp"
#include "slotfuse/ingest.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

struct ConfidenceObservation {
  std::string system_id;
  double confidence = 0.0;
  double weight = 1.0;
};

// One (query, slot) key: M distinct values, each with the confidences the
// systems assigned it, and the budget capping the summed output.
struct AggregationProblem {
  std::string query_id;
  std::string slot;
  std::vector<std::string> values;
  std::vector<std::vector<ConfidenceObservation>> observations;  // per value
  double budget = 1.0;
};

struct AggregatedValue {
  std::string value;
  double confidence = 0.0;  // x_i
  bool clipped = false;     // at 0 or 1 in the solution
};

struct AggregatedOutput {
  std::vector<AggregatedValue> values;  // aligned with problem.values
  double lambda_star = 0.0;             // 0 when the budget is slack
};

// Minimizes Σ_i Σ_j w_ij (x_i − c_i(j))² over 0 ≤ x_i ≤ 1, Σ x_i ≤ budget.
// Weighted means are returned directly when they fit the budget; otherwise
// the Lagrange multiplier is bisected until |Σx − budget| ≤ 1e-10.
AggregatedOutput solve_aggregation(const AggregationProblem& problem);

// Per-slot (and per-entity-type) confidence budgets. Slots carry a colon in
// their names, entity types do not; the TSV uses one row per entry.
struct BudgetTable {
  std::map<std::string, double> slot_budget;
  std::map<std::string, double> entity_budget;

  // SINGLE slots always budget 1; LIST slots default to 1 when unseen.
  double budget_for_slot(const std::string& slot, const SlotRegistry& registry) const;

  std::string to_tsv() const;
  static BudgetTable parse_tsv(const std::string& text, const std::string& source_name);
};

// Estimates LIST-slot budgets n_c/n from a prior year's pooled responses and
// key: n_c is the mean number of correct fills per queried entity and n the
// number of distinct pooled fills across entities. Slots named in
// inverse_slots inherit the mapped slot's ratio when they have no data of
// their own. The per-entity alternative reading of n is recorded as a note.
BudgetTable estimate_budgets(const std::vector<ResponseLine>& prior_responses,
                             const std::vector<KeyEntry>& prior_key,
                             const SlotRegistry& registry,
                             const std::map<std::string, std::string>& inverse_slots,
                             Diagnostics& diag);

// Merges the runs of one team: fills shared between runs get the mean
// confidence and the provenance of their best line, unshared fills carry
// over, and a NIL row survives only when no run answered its key. The
// output run_id is the team id. Idempotent.
RunFile combine_team_runs(const std::vector<RunFile>& runs);

inline constexpr const char* kUnsupEnsembleRunId = "UNSUP_ENSEMBLE";

// Aggregates the (already team-combined) runs of systems without history
// into a single run with solver confidences, uniform weights w = 1. The
// result feeds the stacker as one more roster system.
RunFile build_unsupervised_ensemble(const std::vector<RunFile>& team_runs,
                                    const BudgetTable& budgets, const SlotRegistry& registry,
                                    int jobs, Diagnostics& diag);

}  // namespace slotfuse
