// TF-IDF document vectors and the cosine-similarity features built on them:
// query document vs provenance document, and provenance documents across
// the systems producing the same fill.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "slotfuse/core.hpp"
#include "slotfuse/ingest.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

struct TfidfOptions {
  bool smooth_idf = false;  // ln((1+#docs)/(1+df)) + 1 instead of ln(#docs/df)
  bool log_tf = false;      // 1 + ln(tf) instead of the raw count
};

struct TfidfVector {
  std::map<std::string, double> weights;  // zero-weight terms are omitted
  double norm = 0.0;

  double weight(const std::string& term) const;
};

// TF-IDF weights for one indexed document. Unknown doc_id throws.
TfidfVector tfidf_vector(const CorpusIndex& index, const std::string& doc_id,
                         const TfidfOptions& options = {});

// dot(a,b) / (|a|·|b|); 0 when either norm is 0.
double cosine(const TfidfVector& a, const TfidfVector& b);

// Frozen vector table over the documents a feature pass will touch.
// Documents absent from the corpus are recorded once in the diagnostics and
// score 0 in every similarity involving them.
class DocVectorTable {
 public:
  static DocVectorTable build(const CorpusIndex& index, std::vector<std::string> doc_ids,
                              const TfidfOptions& options, int jobs, Diagnostics& diag);

  const TfidfVector* find(const std::string& doc_id) const;
  double similarity(const std::string& a, const std::string& b) const;

 private:
  std::map<std::string, TfidfVector> vectors_;
};

// cosine(query document, system's filler-provenance document) for each
// system producing the candidate. Systems not in the returned map score 0.
std::map<std::string, double> query_doc_similarity(const Candidate& candidate, const Query& query,
                                                   const DocVectorTable& table);

// Mean cosine between each producing system's filler-provenance document
// and the other producers' documents. A lone producer scores 0.
std::map<std::string, double> cross_provenance_similarity(const Candidate& candidate,
                                                          const DocVectorTable& table);

}  // namespace slotfuse
