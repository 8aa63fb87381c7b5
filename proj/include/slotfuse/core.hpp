// Domain types shared by every stage of the slot-filling ensemble:
// provenance spans, system responses, queries, candidates and gold keys.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slotfuse {

enum class EntityType { PER, ORG, GPE };
enum class SlotArity { SINGLE, LIST };

std::string to_string(EntityType type);
std::optional<EntityType> parse_entity_type(std::string_view text);

// Inclusive character offsets; the span [10, 40] covers 31 positions.
struct Span {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t length() const { return end - start + 1; }
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

// A document pointer of the form docid:start-end. Multiple spans within
// the same document serialize as comma-joined docid:start-end chunks and
// round-trip exactly.
struct Provenance {
  std::string doc_id;
  std::vector<Span> spans;

  static Provenance parse(std::string_view text);
  std::string to_string() const;
  void validate() const;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// One row of a system's run file (the seven-column output line format).
// A NIL row has nil=true, an empty filler and no provenance.
struct ResponseLine {
  std::string query_id;
  std::string slot;
  std::string run_id;
  bool nil = false;
  std::optional<Provenance> relation_provenance;
  std::string filler;
  std::optional<Provenance> filler_provenance;
  double confidence = 1.0;

  void validate() const;
  friend bool operator==(const ResponseLine&, const ResponseLine&) = default;
};

struct Query {
  std::string id;
  std::string name;
  EntityType entity_type = EntityType::PER;
  std::string doc_id;
  Span span;
  std::vector<std::string> slots;
};

struct SlotSpec {
  std::string name;
  EntityType entity_type = EntityType::PER;
  SlotArity arity = SlotArity::LIST;
};

// The fixed slot inventory for PER and ORG queries, plus arity lookups.
// GPE is a registered entity type for cold-start style queries even though
// it carries no slots of its own.
class SlotRegistry {
 public:
  static const SlotRegistry& builtin();

  bool contains(std::string_view slot) const;
  const SlotSpec* find(std::string_view slot) const;
  SlotArity arity(const std::string& slot) const;  // throws on unknown slot
  bool is_single_valued(const std::string& slot) const;
  std::vector<std::string> slots_for(EntityType type) const;  // sorted

  void add(SlotSpec spec);

 private:
  std::map<std::string, SlotSpec, std::less<>> slots_;
};

// A key-value instance judged by the meta-classifier: one distinct
// (query, slot, normalized fill) with every system's response attached.
struct Candidate {
  std::string query_id;
  std::string slot;
  std::string fill_norm;
  std::map<std::string, ResponseLine> responses;  // system id -> retained line
  std::optional<bool> label;

  void validate() const;
  double max_confidence() const;
};

enum class KeyOrigin { POOLED, MANUAL };

// One assessed (query, slot, fill) judgment from the gold key.
struct KeyEntry {
  std::string query_id;
  std::string slot;
  std::string fill_norm;
  bool correct = false;
  KeyOrigin origin = KeyOrigin::POOLED;
};

// Trims, collapses internal whitespace runs to one space and lowercases
// (simple ASCII case folding). Idempotent.
std::string normalize_fill(std::string_view raw);

// True when a should replace b as the retained line for a candidate:
// higher confidence wins, exact ties fall back to line content so the
// choice is independent of input order.
bool prefer_line(const ResponseLine& a, const ResponseLine& b);

// Groups non-NIL lines into one Candidate per distinct
// (query_id, slot, normalize_fill(filler)). When one system emits several
// lines for the same candidate, the highest-confidence line is kept; exact
// ties are broken on line content so the result is order-independent.
// NIL lines are skipped. Output is sorted by (query_id, slot, fill_norm).
std::vector<Candidate> group_candidates(const std::vector<ResponseLine>& lines);

}  // namespace slotfuse
