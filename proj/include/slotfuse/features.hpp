// Feature matrix assembly for the stacked meta-classifier: per-system
// confidences and similarities, provenance agreement scalars and the
// relation one-hot, in a fixed serializable layout.
#pragma once

#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "slotfuse/core.hpp"
#include "slotfuse/ingest.hpp"
#include "slotfuse/provenance.hpp"
#include "slotfuse/similarity.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

enum class FeatureGroup { CONF, QSIM, PSIM, DPS, OP, REL, RELPROV };

std::string to_string(FeatureGroup group);
std::optional<FeatureGroup> parse_feature_group(std::string_view text);

// Column order is fixed: the per-system blocks (CONF, QSIM, PSIM, one entry
// per roster system), then the scalars (DPS, OP, the two RELPROV scores),
// then the relation one-hot. Disabled groups are skipped.
struct FeatureLayout {
  std::vector<std::string> roster;           // ordered system ids
  std::set<FeatureGroup> groups;             // enabled feature groups
  std::vector<std::string> relation_vocab;   // ordered slot names for REL

  bool has(FeatureGroup group) const { return groups.count(group) > 0; }
  std::size_t dimension() const;
  std::vector<std::string> column_names() const;

  nlohmann::json to_json() const;
  static FeatureLayout from_json(const nlohmann::json& j);

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

// One featurized candidate, keyed like the Candidate it came from.
struct FeatureVector {
  std::string query_id;
  std::string slot;
  std::string fill_norm;
  std::vector<double> values;
  std::optional<bool> label;
};

struct FeaturizeOptions {
  TfidfOptions tfidf;
  ProvenanceAggregation aggregation;
  // Train-time featurization rejects slots outside the relation vocabulary;
  // predict-time emits an all-zero one-hot with a warning instead.
  bool strict_relations = true;
  int jobs = 1;
};

// Builds one FeatureVector per candidate, in input order. The queries list
// is consulted for QSIM (query document lookup) and the corpus for both
// similarity groups; pass nullptr when those groups are disabled.
std::vector<FeatureVector> featurize(const std::vector<Candidate>& candidates,
                                     const FeatureLayout& layout,
                                     const std::vector<Query>* queries,
                                     const CorpusIndex* corpus, const FeaturizeOptions& options,
                                     Diagnostics& diag);

// Relation vocabulary for a layout: the sorted distinct slots of the
// candidate set.
std::vector<std::string> relation_vocabulary(const std::vector<Candidate>& candidates);

// Marks each candidate correct or incorrect from the gold key. Candidates
// absent from the key are labeled incorrect and counted in the diagnostics.
void label_candidates(std::vector<Candidate>& candidates, const std::vector<KeyEntry>& key,
                      Diagnostics& diag);

// Feature matrix TSV: key columns, one column per layout entry, optional
// trailing label column. The header encodes the layout, so reading
// reconstructs it.
void write_feature_matrix(std::ostream& out, const FeatureLayout& layout,
                          const std::vector<FeatureVector>& rows);
std::string write_feature_matrix(const FeatureLayout& layout,
                                 const std::vector<FeatureVector>& rows);
std::pair<FeatureLayout, std::vector<FeatureVector>> read_feature_matrix(
    std::istream& in, const std::string& source_name);

}  // namespace slotfuse
