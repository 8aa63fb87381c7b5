#include "slotfuse/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "slotfuse/parallel.hpp"

namespace slotfuse {

double TfidfVector::weight(const std::string& term) const {
  auto it = weights.find(term);
  return it == weights.end() ? 0.0 : it->second;
}

TfidfVector tfidf_vector(const CorpusIndex& index, const std::string& doc_id,
                         const TfidfOptions& options) {
  const auto* counts = index.document(doc_id);
  if (!counts) throw std::invalid_argument("document not indexed: " + doc_id);

  const double n_docs = static_cast<double>(index.document_count());
  TfidfVector vec;
  double norm_sq = 0.0;
  for (const auto& [term, tf] : *counts) {
    const double df = static_cast<double>(index.document_frequency(term));
    const double idf = options.smooth_idf ? std::log((1.0 + n_docs) / (1.0 + df)) + 1.0
                                          : std::log(n_docs / df);
    const double tf_val = options.log_tf ? 1.0 + std::log(static_cast<double>(tf))
                                         : static_cast<double>(tf);
    const double w = tf_val * idf;
    if (w != 0.0) {
      vec.weights.emplace(term, w);
      norm_sq += w * w;
    }
  }
  vec.norm = std::sqrt(norm_sq);
  return vec;
}

double cosine(const TfidfVector& a, const TfidfVector& b) {
  if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
  const TfidfVector& small = a.weights.size() <= b.weights.size() ? a : b;
  const TfidfVector& large = a.weights.size() <= b.weights.size() ? b : a;
  double dot = 0.0;
  for (const auto& [term, w] : small.weights) {
    auto it = large.weights.find(term);
    if (it != large.weights.end()) dot += w * it->second;
  }
  return dot / (a.norm * b.norm);
}

DocVectorTable DocVectorTable::build(const CorpusIndex& index, std::vector<std::string> doc_ids,
                                     const TfidfOptions& options, int jobs, Diagnostics& diag) {
  std::sort(doc_ids.begin(), doc_ids.end());
  doc_ids.erase(std::unique(doc_ids.begin(), doc_ids.end()), doc_ids.end());

  std::vector<std::string> present;
  present.reserve(doc_ids.size());
  for (const std::string& id : doc_ids) {
    if (index.has_document(id)) {
      present.push_back(id);
    } else {
      ++diag.missing_provenance_docs;
      diag.warn("document not in corpus, similarities score 0: " + id);
    }
  }

  std::vector<TfidfVector> vectors(present.size());
  parallel_for(present.size(), jobs, [&](std::size_t i) {
    vectors[i] = tfidf_vector(index, present[i], options);
  });

  DocVectorTable table;
  for (std::size_t i = 0; i < present.size(); ++i) {
    table.vectors_.emplace(present[i], std::move(vectors[i]));
  }
  return table;
}

const TfidfVector* DocVectorTable::find(const std::string& doc_id) const {
  auto it = vectors_.find(doc_id);
  return it == vectors_.end() ? nullptr : &it->second;
}

double DocVectorTable::similarity(const std::string& a, const std::string& b) const {
  const TfidfVector* va = find(a);
  const TfidfVector* vb = find(b);
  if (!va || !vb) return 0.0;
  return cosine(*va, *vb);
}

std::map<std::string, double> query_doc_similarity(const Candidate& candidate, const Query& query,
                                                   const DocVectorTable& table) {
  std::map<std::string, double> out;
  for (const auto& [system_id, line] : candidate.responses) {
    if (!line.filler_provenance) continue;
    out.emplace(system_id, table.similarity(query.doc_id, line.filler_provenance->doc_id));
  }
  return out;
}

std::map<std::string, double> cross_provenance_similarity(const Candidate& candidate,
                                                          const DocVectorTable& table) {
  std::vector<std::pair<std::string, std::string>> producers;  // system, doc
  for (const auto& [system_id, line] : candidate.responses) {
    if (!line.filler_provenance) continue;
    producers.emplace_back(system_id, line.filler_provenance->doc_id);
  }

  std::map<std::string, double> out;
  if (producers.size() < 2) {
    for (const auto& [system_id, doc] : producers) out.emplace(system_id, 0.0);
    return out;
  }
  for (std::size_t i = 0; i < producers.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < producers.size(); ++j) {
      if (j == i) continue;
      sum += table.similarity(producers[i].second, producers[j].second);
    }
    out.emplace(producers[i].first, sum / static_cast<double>(producers.size() - 1));
  }
  return out;
}

}  // namespace slotfuse
