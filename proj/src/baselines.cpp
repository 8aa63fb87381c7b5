#include "slotfuse/baselines.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "slotfuse/text.hpp"

namespace slotfuse {

namespace {

bool candidate_order(const Candidate& a, const Candidate& b) {
  return std::tie(a.query_id, a.slot, a.fill_norm) < std::tie(b.query_id, b.slot, b.fill_norm);
}

// Keeps one winner per (query, SINGLE slot): highest max-confidence fill,
// ties to the smallest fill_norm.
std::vector<Candidate> resolve_single_slots(std::vector<Candidate> selected,
                                            const SlotRegistry& registry) {
  std::map<std::pair<std::string, std::string>, Candidate> winners;
  std::vector<Candidate> out;
  for (Candidate& c : selected) {
    if (!registry.is_single_valued(c.slot)) {
      out.push_back(std::move(c));
      continue;
    }
    auto key = std::make_pair(c.query_id, c.slot);
    auto [it, fresh] = winners.try_emplace(key, std::move(c));
    if (fresh) continue;
    Candidate& cur = it->second;
    const double mc = c.max_confidence();
    const double mcur = cur.max_confidence();
    if (mc > mcur || (mc == mcur && c.fill_norm < cur.fill_norm)) cur = std::move(c);
  }
  for (auto& [key, c] : winners) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), candidate_order);
  return out;
}

}  // namespace

std::vector<Candidate> union_ensemble(const std::vector<Candidate>& candidates,
                                      const SlotRegistry& registry) {
  return resolve_single_slots(candidates, registry);
}

std::vector<Candidate> voting_ensemble(const std::vector<Candidate>& candidates, int k,
                                       const SlotRegistry& registry) {
  if (k < 1) throw std::invalid_argument("voting threshold must be at least 1");
  std::vector<Candidate> survivors;
  for (const Candidate& c : candidates) {
    if (c.responses.size() >= static_cast<std::size_t>(k)) survivors.push_back(c);
  }
  return resolve_single_slots(std::move(survivors), registry);
}

namespace {

double voting_f1(const std::vector<Candidate>& candidates, int k,
                 const std::vector<KeyEntry>& key, const SlotRegistry& registry,
                 double* precision, double* recall) {
  Diagnostics diag;
  const auto lines = to_run_lines(voting_ensemble(candidates, k, registry), "VOTE");
  const ScoreReport report = score(lines, key, ScoreMode::OFFICIAL, nullptr, diag);
  if (precision) *precision = report.overall.precision;
  if (recall) *recall = report.overall.recall;
  return report.overall.f1;
}

}  // namespace

int learn_threshold(const std::vector<Candidate>& candidates, const std::vector<KeyEntry>& key,
                    int pool_size, const SlotRegistry& registry) {
  if (pool_size < 1) throw std::invalid_argument("threshold learning needs a non-empty pool");
  int best_k = 1;
  double best_f1 = -1.0;
  for (int k = 1; k <= pool_size; ++k) {
    const double f1 = voting_f1(candidates, k, key, registry, nullptr, nullptr);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_k = k;
    }
  }
  return best_k;
}

std::string PrCurve::to_csv() const {
  std::ostringstream out;
  out << "k,precision,recall,f1\n";
  for (const PrPoint& p : points) {
    out << p.k << ',' << format_fixed(p.precision, 6) << ',' << format_fixed(p.recall, 6) << ','
        << format_fixed(p.f1, 6) << '\n';
  }
  return out.str();
}

std::pair<int, PrCurve> oracle_threshold(const std::vector<Candidate>& candidates,
                                         const std::vector<KeyEntry>& key, int pool_size,
                                         const SlotRegistry& registry) {
  if (pool_size < 1) throw std::invalid_argument("oracle sweep needs a non-empty pool");
  PrCurve curve;
  int best_k = 1;
  double best_f1 = -1.0;
  for (int k = 1; k <= pool_size; ++k) {
    PrPoint p;
    p.k = k;
    p.f1 = voting_f1(candidates, k, key, registry, &p.precision, &p.recall);
    if (p.f1 > best_f1) {
      best_f1 = p.f1;
      best_k = k;
    }
    curve.points.push_back(p);
  }
  return {best_k, std::move(curve)};
}

std::vector<ResponseLine> to_run_lines(const std::vector<Candidate>& selected,
                                       const std::string& run_id) {
  std::vector<ResponseLine> lines;
  lines.reserve(selected.size());
  for (const Candidate& c : selected) {
    if (c.responses.empty()) continue;
    const ResponseLine* best = &c.responses.begin()->second;
    for (const auto& [system_id, line] : c.responses) {
      if (prefer_line(line, *best)) best = &line;
    }
    ResponseLine out = *best;
    out.run_id = run_id;
    lines.push_back(std::move(out));
  }
  return lines;
}

}  // namespace slotfuse
