// Provenance agreement scores: how many systems cite the same document for
// a slot fill, and how well their character offsets overlap within it.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "slotfuse/core.hpp"

namespace slotfuse {

// Characters covered by a set of possibly overlapping inclusive spans.
std::int64_t covered_length(std::vector<Span> spans);

// Jaccard similarity of the character-position sets covered by two span
// lists. Empty union scores 0.
double span_jaccard(std::vector<Span> a, std::vector<Span> b);

enum class ProvenanceSource { FILLER, RELATION };

// One answering response in the pool for a (query, slot) pair. A system
// contributing several distinct fills appears once per fill.
struct PoolResponse {
  std::string response_id;  // unique within the pool
  Provenance provenance;
};

struct ProvenanceScores {
  double dps = 0.0;  // share of the pool anchored in this response's document
  double op = 0.0;   // offset agreement within that document's group
};

// The answering pool for one (query, slot) pair, grouped by cited document.
struct ProvenanceGroup {
  std::string query_id;
  std::string slot;
  std::map<std::string, std::vector<PoolResponse>> groups;  // doc_id -> responses
  std::size_t n_total = 0;

  static ProvenanceGroup build(std::string query_id, std::string slot,
                               std::vector<PoolResponse> responses);

  // n/N for the document group holding response_id. Unknown id throws.
  double document_provenance_score(const std::string& response_id) const;

  // Mean span overlap with the other responses in the same document group,
  // divided by the group size (so a singleton scores 0 and the result stays
  // strictly below 1).
  double offset_provenance_score(const std::string& response_id) const;

  // Both scores for every pool member in one pass.
  std::map<std::string, ProvenanceScores> score_all() const;
};

// Pool member id for a (system, fill) response; tab-joined so neither part
// can collide with the separator.
std::string pool_response_id(const std::string& system_id, const std::string& fill_norm);

// Builds the answering pool from every candidate of one (query, slot) pair,
// reading either the filler or the relation provenance column. Responses
// missing that column are skipped.
ProvenanceGroup build_provenance_pool(const std::string& query_id, const std::string& slot,
                                      const std::vector<const Candidate*>& candidates,
                                      ProvenanceSource source);

struct ProvenanceAggregation {
  enum class Mode { MAX, MEAN };
  Mode dps = Mode::MAX;
  Mode op = Mode::MEAN;
};

// Reduces the per-response scores of one candidate's producing systems to a
// single (dps, op) pair for the feature matrix.
std::pair<double, double> candidate_provenance_features(const Candidate& candidate,
                                                        const ProvenanceGroup& pool,
                                                        const ProvenanceAggregation& agg = {});

// Same reduction over scores already computed with score_all(), for callers
// featurizing many candidates against one pool.
std::pair<double, double> candidate_provenance_features(
    const Candidate& candidate, const std::map<std::string, ProvenanceScores>& scores,
    const ProvenanceAggregation& agg = {});

}  // namespace slotfuse
