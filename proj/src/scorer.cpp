#include "slotfuse/scorer.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "slotfuse/text.hpp"

namespace slotfuse {

std::string to_string(ScoreMode mode) {
  return mode == ScoreMode::OFFICIAL ? "official" : "unofficial";
}

std::optional<ScoreMode> parse_score_mode(std::string_view text) {
  if (text == "official") return ScoreMode::OFFICIAL;
  if (text == "unofficial") return ScoreMode::UNOFFICIAL;
  return std::nullopt;
}

namespace {

void finish(SlotScore& s) {
  s.precision = s.returned == 0 ? 0.0
                                : static_cast<double>(s.correct) / static_cast<double>(s.returned);
  s.recall = s.gold == 0 ? 0.0 : static_cast<double>(s.correct) / static_cast<double>(s.gold);
  s.f1 = s.precision + s.recall == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
}

// Counting for one (query, slot) cell: alias-connected fills collapse into
// groups; a group is correct when it holds both a response and a C entry.
struct Cell {
  std::set<std::string> response_fills;
  std::set<std::string> correct_fills;
  std::set<std::string> assessed_fills;  // C or W
};

struct CellCounts {
  std::size_t returned = 0, gold = 0, correct = 0, unassessed = 0;
};

CellCounts count_cell(const Cell& cell, const AliasTable* aliases) {
  std::vector<std::string> fills;
  for (const std::string& f : cell.response_fills) fills.push_back(f);
  for (const std::string& f : cell.correct_fills) {
    if (!cell.response_fills.count(f)) fills.push_back(f);
  }

  DisjointSets sets(fills.size());
  if (aliases) {
    // Fills sharing any alias-set token belong to one group.
    std::map<std::string, std::size_t> token_owner;
    for (std::size_t i = 0; i < fills.size(); ++i) {
      std::vector<std::string> tokens{fills[i]};
      for (const AliasCount& a : aliases->aliases(fills[i])) tokens.push_back(a.alias);
      for (const std::string& token : tokens) {
        auto [it, fresh] = token_owner.try_emplace(token, i);
        if (!fresh) sets.unite(i, it->second);
      }
    }
  }

  std::map<std::size_t, std::pair<bool, bool>> groups;  // root -> (responded, gold)
  std::map<std::size_t, bool> group_assessed;
  for (std::size_t i = 0; i < fills.size(); ++i) {
    const std::size_t root = sets.find(i);
    auto& [responded, gold] = groups[root];
    responded = responded || cell.response_fills.count(fills[i]) > 0;
    gold = gold || cell.correct_fills.count(fills[i]) > 0;
    group_assessed[root] = group_assessed[root] || cell.assessed_fills.count(fills[i]) > 0;
  }

  CellCounts counts;
  for (const auto& [root, flags] : groups) {
    const auto [responded, gold] = flags;
    counts.returned += responded;
    counts.gold += gold;
    counts.correct += responded && gold;
    counts.unassessed += responded && !group_assessed[root];
  }
  return counts;
}

}  // namespace

ScoreReport score(const std::vector<ResponseLine>& lines, const std::vector<KeyEntry>& key,
                  ScoreMode mode, const AliasTable* aliases, Diagnostics& diag) {
  std::map<std::pair<std::string, std::string>, Cell> cells;  // (query, slot)
  std::set<std::string> key_queries;

  for (const KeyEntry& entry : key) {
    if (mode == ScoreMode::UNOFFICIAL && entry.origin == KeyOrigin::MANUAL) continue;
    key_queries.insert(entry.query_id);
    Cell& cell = cells[{entry.query_id, entry.slot}];
    cell.assessed_fills.insert(entry.fill_norm);
    if (entry.correct) cell.correct_fills.insert(entry.fill_norm);
  }

  std::set<std::string> unknown_queries;
  for (const ResponseLine& line : lines) {
    if (line.nil) continue;
    if (!key_queries.count(line.query_id)) unknown_queries.insert(line.query_id);
    cells[{line.query_id, line.slot}].response_fills.insert(normalize_fill(line.filler));
  }
  for (const std::string& q : unknown_queries) {
    diag.warn("run answers query " + q + " which the key never assesses; counted wrong");
  }

  ScoreReport report;
  report.mode = mode;
  for (const auto& [key_pair, cell] : cells) {
    const CellCounts counts = count_cell(cell, aliases);
    SlotScore& slot = report.per_slot[key_pair.second];
    slot.correct += counts.correct;
    slot.returned += counts.returned;
    slot.gold += counts.gold;
    report.overall.correct += counts.correct;
    report.overall.returned += counts.returned;
    report.overall.gold += counts.gold;
    report.unassessed += counts.unassessed;
  }
  for (auto& [slot, s] : report.per_slot) finish(s);
  finish(report.overall);
  if (report.unassessed > 0) {
    diag.note(std::to_string(report.unassessed) +
              " returned answer(s) were never assessed; counted wrong");
  }
  return report;
}

namespace {

void score_row(std::ostringstream& out, const std::string& name, const SlotScore& s) {
  out << name;
  for (std::size_t pad = name.size(); pad < 28; ++pad) out << ' ';
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%8zu %8zu %8zu   %6.4f %6.4f %6.4f", s.correct, s.returned,
                s.gold, s.precision, s.recall, s.f1);
  out << buf << '\n';
}

}  // namespace

std::string ScoreReport::to_text() const {
  std::ostringstream out;
  out << "mode: " << slotfuse::to_string(mode) << '\n';
  out << "slot                          correct returned     gold        P      R     F1\n";
  for (const auto& [slot, s] : per_slot) score_row(out, slot, s);
  score_row(out, "ALL", overall);
  return out.str();
}

std::string ScoreReport::to_csv() const {
  std::ostringstream out;
  out << "slot,correct,returned,gold,precision,recall,f1\n";
  const auto row = [&](const std::string& name, const SlotScore& s) {
    out << name << ',' << s.correct << ',' << s.returned << ',' << s.gold << ','
        << format_fixed(s.precision, 4) << ',' << format_fixed(s.recall, 4) << ','
        << format_fixed(s.f1, 4) << '\n';
  };
  for (const auto& [slot, s] : per_slot) row(slot, s);
  row("ALL", overall);
  return out.str();
}

ScoreDelta compare_reports(const ScoreReport& baseline, const ScoreReport& candidate) {
  if (baseline.mode != candidate.mode) {
    throw std::invalid_argument("cannot compare reports with different scoring modes");
  }
  const auto diff = [](const SlotScore& a, const SlotScore& b) {
    return SlotDelta{b.precision - a.precision, b.recall - a.recall, b.f1 - a.f1};
  };
  ScoreDelta delta;
  delta.overall = diff(baseline.overall, candidate.overall);
  std::set<std::string> slots;
  for (const auto& [slot, s] : baseline.per_slot) slots.insert(slot);
  for (const auto& [slot, s] : candidate.per_slot) slots.insert(slot);
  for (const std::string& slot : slots) {
    const auto a = baseline.per_slot.count(slot) ? baseline.per_slot.at(slot) : SlotScore{};
    const auto b = candidate.per_slot.count(slot) ? candidate.per_slot.at(slot) : SlotScore{};
    delta.per_slot[slot] = diff(a, b);
  }
  return delta;
}

std::string ScoreDelta::to_text() const {
  std::ostringstream out;
  const auto row = [&](const std::string& name, const SlotDelta& d) {
    out << name;
    for (std::size_t pad = name.size(); pad < 28; ++pad) out << ' ';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%+7.4f %+7.4f %+7.4f", d.precision, d.recall, d.f1);
    out << buf << '\n';
  };
  out << "slot                               dP      dR     dF1\n";
  for (const auto& [slot, d] : per_slot) row(slot, d);
  row("ALL", overall);
  return out.str();
}

}  // namespace slotfuse
