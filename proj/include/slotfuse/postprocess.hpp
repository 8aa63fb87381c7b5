// Output shaping after classification: alias-redundancy elimination, date
// and numeric dedup, the single-valued-slot rule, and NIL cluster merging
// for linking-style output.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slotfuse/core.hpp"
#include "slotfuse/ingest.hpp"

namespace slotfuse {

// A candidate the meta-classifier accepted, with its probability.
struct ScoredCandidate {
  Candidate candidate;
  double probability = 0.0;
};

enum class SlotClass { ENTITY, DATE, NUMERIC, STRING };

std::string to_string(SlotClass cls);
std::optional<SlotClass> parse_slot_class(std::string_view text);

// Which dedup scheme each slot gets. Unknown slots fall back to exact
// string matching.
class SlotClassTable {
 public:
  static SlotClassTable builtin();
  static SlotClassTable parse_tsv(const std::string& text, const std::string& source_name);
  std::string to_tsv() const;

  SlotClass class_of(const std::string& slot) const;
  void set(const std::string& slot, SlotClass cls);

 private:
  std::map<std::string, SlotClass> classes_;
};

// Date normal form preserving precision: "1990", "1990-01" or "1990-01-05".
// Handles ISO forms and English month-name dates; nullopt when unparseable.
std::optional<std::string> normalize_date(std::string_view fill);

// Numeric value of a fill ("73", "73.0", "1,200"); nullopt when not a number.
std::optional<double> normalize_number(std::string_view fill);

// One (query, slot) group of an entity-valued slot: fills whose alias sets
// (fill plus its table aliases) intersect collapse transitively; each group
// keeps its highest-probability member (ties to the smallest fill).
std::vector<ScoredCandidate> eliminate_aliases(const std::vector<ScoredCandidate>& group,
                                               const AliasTable& aliases);

// One (query, slot) group of a date/numeric/string slot: merge fills with
// equal normal forms, keeping the highest-probability member.
std::vector<ScoredCandidate> simple_dedup(const std::vector<ScoredCandidate>& group,
                                          SlotClass slot_class);

// Per SINGLE (query, slot) keep only the highest-probability candidate.
std::vector<ScoredCandidate> select_single_valued(std::vector<ScoredCandidate> accepted,
                                                  const SlotRegistry& registry);

// Full pipeline: group by (query, slot), dedup by slot class, then apply
// the single-valued rule. Output sorted by (query, slot, fill).
std::vector<ScoredCandidate> postprocess(std::vector<ScoredCandidate> accepted,
                                         const AliasTable& aliases, const SlotClassTable& classes,
                                         const SlotRegistry& registry, int jobs);

// One entity mention in linking-style output, clustered by KB id or NIL id.
struct MentionLink {
  std::string system_id;
  std::string mention;
  Provenance location;
  std::string cluster_id;
  double confidence = 1.0;
};

// NIL ids are "NIL" followed by digits.
bool is_nil_id(std::string_view id);

struct NilMergeOptions {
  bool exact_offsets = false;  // require span equality, not just (mention, doc)
};

// Merges NIL clusters that share at least one (normalized mention, doc)
// pair, transitively, and relabels merged components with fresh sequential
// NIL ids ordered by their smallest original (system, cluster) key.
// KB-linked mentions pass through untouched.
std::vector<MentionLink> merge_nil_clusters(std::vector<MentionLink> links,
                                            const NilMergeOptions& options = {});

// Link file TSV: system_id, mention, doc_id, start, end, cluster_id,
// confidence.
std::string write_links(const std::vector<MentionLink>& links);
std::vector<MentionLink> parse_links(const std::string& text, const std::string& source_name);

}  // namespace slotfuse
