// Precision/recall/F1 scoring against an assessed key, with the official
// (pooled + manual) and unofficial (pooled only) key scopes.
//
// Matching is on (query, slot, normalized fill), optionally widened to alias
// groups; the official TAC scorer's provenance justification checks are not
// reproduced (see README).
#pragma once

#include <map>
#include <string>
#include <vector>

#include "slotfuse/core.hpp"
#include "slotfuse/ingest.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

enum class ScoreMode { OFFICIAL, UNOFFICIAL };

std::string to_string(ScoreMode mode);
std::optional<ScoreMode> parse_score_mode(std::string_view text);

struct SlotScore {
  std::size_t correct = 0;
  std::size_t returned = 0;
  std::size_t gold = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ScoreReport {
  ScoreMode mode = ScoreMode::OFFICIAL;
  SlotScore overall;
  std::map<std::string, SlotScore> per_slot;
  std::size_t unassessed = 0;  // returned answers with no key entry at all

  std::string to_text() const;
  std::string to_csv() const;
};

// Scores the run's non-NIL lines against the key. Responses are
// deduplicated by (query, slot, fill_norm); with an alias table, fills in
// the same alias group collapse into one answer on both the run and the
// gold side. A response is correct iff its group matches a CORRECT key
// entry, each key entry claimable once.
ScoreReport score(const std::vector<ResponseLine>& lines, const std::vector<KeyEntry>& key,
                  ScoreMode mode, const AliasTable* aliases, Diagnostics& diag);

struct SlotDelta {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// candidate − baseline, per metric and per slot (union of slot rows).
// Reports must share a scoring mode.
struct ScoreDelta {
  SlotDelta overall;
  std::map<std::string, SlotDelta> per_slot;

  std::string to_text() const;
};

ScoreDelta compare_reports(const ScoreReport& baseline, const ScoreReport& candidate);

}  // namespace slotfuse
