#include "slotfuse/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "slotfuse/parallel.hpp"
#include "slotfuse/text.hpp"

namespace slotfuse {

AggregatedOutput solve_aggregation(const AggregationProblem& problem) {
  if (problem.budget <= 0.0) throw std::invalid_argument("aggregation budget must be positive");
  if (problem.values.empty()) throw std::invalid_argument("aggregation problem with no values");
  if (problem.values.size() != problem.observations.size()) {
    throw std::invalid_argument("values and observations are misaligned");
  }

  const std::size_t m = problem.values.size();
  std::vector<double> mean(m, 0.0);    // m_i, weighted mean confidence
  std::vector<double> wsum(m, 0.0);    // W_i = Σ_j w_ij
  for (std::size_t i = 0; i < m; ++i) {
    double num = 0.0;
    for (const ConfidenceObservation& obs : problem.observations[i]) {
      if (obs.weight < 0.0) throw std::invalid_argument("negative observation weight");
      if (obs.confidence < 0.0 || obs.confidence > 1.0) {
        throw std::invalid_argument("confidence outside [0,1] for value '" + problem.values[i] +
                                    "'");
      }
      num += obs.weight * obs.confidence;
      wsum[i] += obs.weight;
    }
    if (wsum[i] <= 0.0) {
      throw std::invalid_argument("value '" + problem.values[i] + "' has zero total weight");
    }
    mean[i] = std::clamp(num / wsum[i], 0.0, 1.0);
  }

  const auto x_of = [&](double lambda, std::vector<double>& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      x[i] = std::clamp(mean[i] - lambda / (2.0 * wsum[i]), 0.0, 1.0);
      total += x[i];
    }
    return total;
  };

  AggregatedOutput out;
  std::vector<double> x(m, 0.0);
  double total = x_of(0.0, x);
  if (total > problem.budget) {
    // Σ x_i(λ) decreases monotonically from Σm_i to 0; bisect to the budget.
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t i = 0; i < m; ++i) hi = std::max(hi, 2.0 * wsum[i] * mean[i]);
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      total = x_of(mid, x);
      if (std::fabs(total - problem.budget) <= 1e-10) {
        out.lambda_star = mid;
        break;
      }
      (total > problem.budget ? lo : hi) = mid;
      out.lambda_star = mid;
    }
    total = x_of(out.lambda_star, x);
  }

  out.values.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.values.push_back(AggregatedValue{problem.values[i], x[i], x[i] == 0.0 || x[i] == 1.0});
  }
  return out;
}

double BudgetTable::budget_for_slot(const std::string& slot, const SlotRegistry& registry) const {
  if (registry.contains(slot) && registry.is_single_valued(slot)) return 1.0;
  auto it = slot_budget.find(slot);
  return it == slot_budget.end() ? 1.0 : it->second;
}

std::string BudgetTable::to_tsv() const {
  std::ostringstream out;
  for (const auto& [slot, budget] : slot_budget) {
    out << slot << '\t' << format_exact(budget) << '\n';
  }
  for (const auto& [entity, budget] : entity_budget) {
    out << entity << '\t' << format_exact(budget) << '\n';
  }
  return out.str();
}

BudgetTable BudgetTable::parse_tsv(const std::string& text, const std::string& source_name) {
  BudgetTable table;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string_view line(text.data() + start,
                          (nl == std::string::npos ? text.size() : nl) - start);
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2) {
      throw ParseError(source_name + ":" + std::to_string(line_no) + ": expected 2 columns");
    }
    const auto budget = parse_double(cols[1]);
    if (!budget || *budget <= 0.0) {
      throw ParseError(source_name + ":" + std::to_string(line_no) +
                       ": budget must be a positive real");
    }
    const std::string name(trim(cols[0]));
    (name.find(':') != std::string::npos ? table.slot_budget : table.entity_budget)[name] = *budget;
  }
  return table;
}

BudgetTable estimate_budgets(const std::vector<ResponseLine>& prior_responses,
                             const std::vector<KeyEntry>& prior_key,
                             const SlotRegistry& registry,
                             const std::map<std::string, std::string>& inverse_slots,
                             Diagnostics& diag) {
  struct SlotData {
    std::set<std::string> entities;                           // queried query ids
    std::set<std::pair<std::string, std::string>> fills;      // pooled (query, fill)
    std::size_t correct = 0;
  };
  std::map<std::string, SlotData> per_slot;

  for (const ResponseLine& line : prior_responses) {
    if (line.nil) continue;
    SlotData& data = per_slot[line.slot];
    data.entities.insert(line.query_id);
    data.fills.insert({line.query_id, normalize_fill(line.filler)});
  }
  for (const KeyEntry& entry : prior_key) {
    SlotData& data = per_slot[entry.slot];
    data.entities.insert(entry.query_id);
    if (entry.correct) ++data.correct;
  }

  BudgetTable table;
  for (const auto& [slot, data] : per_slot) {
    if (registry.contains(slot) && registry.is_single_valued(slot)) {
      table.slot_budget[slot] = 1.0;
      continue;
    }
    if (data.entities.empty() || data.fills.empty()) continue;
    const double entities = static_cast<double>(data.entities.size());
    const double n_c = static_cast<double>(data.correct) / entities;
    const double n_across = static_cast<double>(data.fills.size());
    if (n_c <= 0.0) continue;  // no correct fills: leave the default budget
    table.slot_budget[slot] = n_c / n_across;
    // Alternative reading: n as mean fills per entity rather than across all.
    const double n_per_entity = n_across / entities;
    diag.note(slot + ": budget " + format_fixed(n_c / n_across, 6) + " (across-all n); " +
              format_fixed(n_c / n_per_entity, 6) + " under the per-entity reading");
  }

  for (const auto& [new_slot, sibling] : inverse_slots) {
    if (new_slot.empty() || sibling.empty()) {
      throw std::invalid_argument("inverse-slot mapping with an empty name");
    }
    if (table.slot_budget.count(new_slot)) continue;  // direct estimate wins
    auto it = table.slot_budget.find(sibling);
    if (it == table.slot_budget.end()) {
      if (!registry.contains(sibling)) {
        throw std::invalid_argument("inverse-slot mapping to unknown slot '" + sibling + "'");
      }
      continue;  // sibling has no data either; both fall back to 1
    }
    table.slot_budget[new_slot] = it->second;
  }
  return table;
}

namespace {

// A line's (query, slot) key.
std::pair<std::string, std::string> key_of(const ResponseLine& line) {
  return {line.query_id, line.slot};
}

}  // namespace

RunFile combine_team_runs(const std::vector<RunFile>& runs) {
  if (runs.empty()) throw std::invalid_argument("no runs to combine");
  const std::string team = runs.front().team_id;
  for (const RunFile& run : runs) {
    if (run.team_id != team) {
      throw std::invalid_argument("runs from different teams: " + run.team_id + " vs " + team);
    }
  }

  // Within each run keep the best line per (query, slot, fill); then merge
  // across runs with mean confidence.
  struct Merged {
    ResponseLine best;          // provenance donor
    double confidence_sum = 0.0;
    std::size_t contributors = 0;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Merged> fills;
  std::set<std::pair<std::string, std::string>> answered;
  std::set<std::pair<std::string, std::string>> nil_keys;

  for (const RunFile& run : runs) {
    std::map<std::tuple<std::string, std::string, std::string>, const ResponseLine*> per_run;
    for (const ResponseLine& line : run.lines) {
      if (line.nil) {
        nil_keys.insert(key_of(line));
        continue;
      }
      answered.insert(key_of(line));
      auto key = std::make_tuple(line.query_id, line.slot, normalize_fill(line.filler));
      auto [it, fresh] = per_run.try_emplace(std::move(key), &line);
      if (!fresh && prefer_line(line, *it->second)) it->second = &line;
    }
    for (const auto& [key, line] : per_run) {
      auto [it, fresh] = fills.try_emplace(key);
      Merged& merged = it->second;
      if (fresh || prefer_line(*line, merged.best)) merged.best = *line;
      merged.confidence_sum += line->confidence;
      merged.contributors += 1;
    }
  }

  RunFile out;
  out.run_id = team;
  out.team_id = team;
  for (const auto& [key, merged] : fills) {
    ResponseLine line = merged.best;
    line.run_id = team;
    line.confidence = merged.confidence_sum / static_cast<double>(merged.contributors);
    out.lines.push_back(std::move(line));
  }
  for (const auto& key : nil_keys) {
    if (answered.count(key)) continue;  // some run answered: the NIL loses
    ResponseLine line;
    line.query_id = key.first;
    line.slot = key.second;
    line.run_id = team;
    line.nil = true;
    out.lines.push_back(std::move(line));
  }
  std::sort(out.lines.begin(), out.lines.end(), [](const ResponseLine& a, const ResponseLine& b) {
    return std::tie(a.query_id, a.slot, a.nil, a.filler) <
           std::tie(b.query_id, b.slot, b.nil, b.filler);
  });
  return out;
}

RunFile build_unsupervised_ensemble(const std::vector<RunFile>& team_runs,
                                    const BudgetTable& budgets, const SlotRegistry& registry,
                                    int jobs, Diagnostics& diag) {
  RunFile out;
  out.run_id = kUnsupEnsembleRunId;
  out.team_id = team_of_run(kUnsupEnsembleRunId);
  if (team_runs.empty()) {
    diag.note("no unsupervised teams configured; ensemble run is empty");
    return out;
  }

  // Per (query, slot): value -> contributing lines across teams.
  std::map<std::pair<std::string, std::string>,
           std::map<std::string, std::vector<const ResponseLine*>>>
      keys;
  for (const RunFile& run : team_runs) {
    for (const ResponseLine& line : run.lines) {
      if (line.nil) continue;
      keys[key_of(line)][normalize_fill(line.filler)].push_back(&line);
    }
  }

  std::vector<AggregationProblem> problems;
  std::vector<std::vector<const ResponseLine*>> donors;  // best line per value
  problems.reserve(keys.size());
  for (const auto& [key, values] : keys) {
    AggregationProblem problem;
    problem.query_id = key.first;
    problem.slot = key.second;
    problem.budget = budgets.budget_for_slot(key.second, registry);
    std::vector<const ResponseLine*> value_donors;
    for (const auto& [value, lines] : values) {
      problem.values.push_back(value);
      std::vector<ConfidenceObservation> obs;
      const ResponseLine* best = lines.front();
      for (const ResponseLine* line : lines) {
        obs.push_back(ConfidenceObservation{line->run_id, line->confidence, 1.0});
        if (prefer_line(*line, *best)) best = line;
      }
      problem.observations.push_back(std::move(obs));
      value_donors.push_back(best);
    }
    problems.push_back(std::move(problem));
    donors.push_back(std::move(value_donors));
  }

  std::vector<AggregatedOutput> solved(problems.size());
  std::vector<std::string> errors(problems.size());
  parallel_for(problems.size(), jobs, [&](std::size_t p) {
    try {
      solved[p] = solve_aggregation(problems[p]);
    } catch (const std::exception& err) {
      errors[p] = err.what();
    }
  });
  for (const std::string& err : errors) {
    if (!err.empty()) throw std::invalid_argument(err);
  }

  for (std::size_t p = 0; p < problems.size(); ++p) {
    for (std::size_t i = 0; i < solved[p].values.size(); ++i) {
      ResponseLine line = *donors[p][i];
      line.run_id = kUnsupEnsembleRunId;
      line.confidence = solved[p].values[i].confidence;
      out.lines.push_back(std::move(line));
    }
  }
  return out;
}

}  // namespace slotfuse
