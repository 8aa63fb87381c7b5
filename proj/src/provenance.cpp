#include "slotfuse/provenance.hpp"

#include <algorithm>
#include <stdexcept>

namespace slotfuse {

namespace {

// Sorts and merges overlapping or adjacent spans; coverage is unchanged.
std::vector<Span> merge_spans(std::vector<Span> spans) {
  std::sort(spans.begin(), spans.end());
  std::vector<Span> merged;
  for (const Span& s : spans) {
    if (!merged.empty() && s.start <= merged.back().end + 1) {
      merged.back().end = std::max(merged.back().end, s.end);
    } else {
      merged.push_back(s);
    }
  }
  return merged;
}

std::int64_t merged_length(const std::vector<Span>& merged) {
  std::int64_t total = 0;
  for (const Span& s : merged) total += s.length();
  return total;
}

std::int64_t intersection_length(const std::vector<Span>& a, const std::vector<Span>& b) {
  std::int64_t total = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const std::int64_t lo = std::max(a[i].start, b[j].start);
    const std::int64_t hi = std::min(a[i].end, b[j].end);
    if (lo <= hi) total += hi - lo + 1;
    if (a[i].end < b[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return total;
}

}  // namespace

std::int64_t covered_length(std::vector<Span> spans) {
  return merged_length(merge_spans(std::move(spans)));
}

double span_jaccard(std::vector<Span> a, std::vector<Span> b) {
  const auto ma = merge_spans(std::move(a));
  const auto mb = merge_spans(std::move(b));
  const std::int64_t inter = intersection_length(ma, mb);
  const std::int64_t uni = merged_length(ma) + merged_length(mb) - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ProvenanceGroup ProvenanceGroup::build(std::string query_id, std::string slot,
                                       std::vector<PoolResponse> responses) {
  ProvenanceGroup pool;
  pool.query_id = std::move(query_id);
  pool.slot = std::move(slot);
  pool.n_total = responses.size();
  for (PoolResponse& r : responses) {
    pool.groups[r.provenance.doc_id].push_back(std::move(r));
  }
  return pool;
}

namespace {

const std::vector<PoolResponse>* find_group(const ProvenanceGroup& pool,
                                            const std::string& response_id) {
  for (const auto& [doc_id, members] : pool.groups) {
    for (const PoolResponse& r : members) {
      if (r.response_id == response_id) return &members;
    }
  }
  return nullptr;
}

double group_offset_score(const std::vector<PoolResponse>& members, std::size_t self) {
  if (members.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i == self) continue;
    sum += span_jaccard(members[i].provenance.spans, members[self].provenance.spans);
  }
  // Verbatim formula: the denominator counts the excluded self term too.
  return sum / static_cast<double>(members.size());
}

}  // namespace

double ProvenanceGroup::document_provenance_score(const std::string& response_id) const {
  const auto* members = find_group(*this, response_id);
  if (!members) throw std::invalid_argument("response not in pool: " + response_id);
  return static_cast<double>(members->size()) / static_cast<double>(n_total);
}

double ProvenanceGroup::offset_provenance_score(const std::string& response_id) const {
  const auto* members = find_group(*this, response_id);
  if (!members) throw std::invalid_argument("response not in pool: " + response_id);
  for (std::size_t i = 0; i < members->size(); ++i) {
    if ((*members)[i].response_id == response_id) return group_offset_score(*members, i);
  }
  return 0.0;  // unreachable
}

std::map<std::string, ProvenanceScores> ProvenanceGroup::score_all() const {
  std::map<std::string, ProvenanceScores> scores;
  for (const auto& [doc_id, members] : groups) {
    const double dps = static_cast<double>(members.size()) / static_cast<double>(n_total);
    for (std::size_t i = 0; i < members.size(); ++i) {
      scores[members[i].response_id] = ProvenanceScores{dps, group_offset_score(members, i)};
    }
  }
  return scores;
}

std::string pool_response_id(const std::string& system_id, const std::string& fill_norm) {
  return system_id + '\t' + fill_norm;
}

ProvenanceGroup build_provenance_pool(const std::string& query_id, const std::string& slot,
                                      const std::vector<const Candidate*>& candidates,
                                      ProvenanceSource source) {
  std::vector<PoolResponse> responses;
  for (const Candidate* c : candidates) {
    for (const auto& [system_id, line] : c->responses) {
      const auto& prov =
          source == ProvenanceSource::FILLER ? line.filler_provenance : line.relation_provenance;
      if (!prov) continue;
      responses.push_back(PoolResponse{pool_response_id(system_id, c->fill_norm), *prov});
    }
  }
  return ProvenanceGroup::build(query_id, slot, std::move(responses));
}

std::pair<double, double> candidate_provenance_features(const Candidate& candidate,
                                                        const ProvenanceGroup& pool,
                                                        const ProvenanceAggregation& agg) {
  return candidate_provenance_features(candidate, pool.score_all(), agg);
}

std::pair<double, double> candidate_provenance_features(
    const Candidate& candidate, const std::map<std::string, ProvenanceScores>& scores,
    const ProvenanceAggregation& agg) {
  double dps_max = 0.0, dps_sum = 0.0, op_max = 0.0, op_sum = 0.0;
  std::size_t n = 0;
  for (const auto& [system_id, line] : candidate.responses) {
    auto it = scores.find(pool_response_id(system_id, candidate.fill_norm));
    if (it == scores.end()) continue;
    dps_max = std::max(dps_max, it->second.dps);
    op_max = std::max(op_max, it->second.op);
    dps_sum += it->second.dps;
    op_sum += it->second.op;
    ++n;
  }
  if (n == 0) return {0.0, 0.0};
  using Mode = ProvenanceAggregation::Mode;
  const double dps = agg.dps == Mode::MAX ? dps_max : dps_sum / static_cast<double>(n);
  const double op = agg.op == Mode::MAX ? op_max : op_sum / static_cast<double>(n);
  return {dps, op};
}

}  // namespace slotfuse
