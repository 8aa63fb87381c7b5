#include "slotfuse/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "slotfuse/baselines.hpp"
#include "slotfuse/model.hpp"
#include "slotfuse/postprocess.hpp"
#include "slotfuse/scorer.hpp"
#include "slotfuse/text.hpp"

namespace slotfuse {

namespace {

double official_f1(const std::vector<ResponseLine>& lines, const std::vector<KeyEntry>& key,
                   Diagnostics& diag) {
  return score(lines, key, ScoreMode::OFFICIAL, nullptr, diag).overall.f1;
}

std::vector<std::string> roster_of(const std::vector<ResponseLine>& train_lines,
                                   const std::vector<ResponseLine>& test_lines) {
  std::set<std::string> ids;
  for (const ResponseLine& line : train_lines) ids.insert(line.run_id);
  for (const ResponseLine& line : test_lines) ids.insert(line.run_id);
  return {ids.begin(), ids.end()};
}

ExperimentRow evaluate(std::string setting, const std::vector<ResponseLine>& train_lines,
                       const std::vector<ResponseLine>& test_lines, const Bundle& train,
                       const Bundle& test, const CorpusIndex* train_corpus,
                       const CorpusIndex* test_corpus, const ExperimentOptions& options,
                       Diagnostics& diag) {
  const SlotRegistry& registry = SlotRegistry::builtin();
  ExperimentRow row;
  row.setting = std::move(setting);

  std::vector<Candidate> train_cands = group_candidates(train_lines);
  label_candidates(train_cands, train.key, diag);
  row.train_candidates = train_cands.size();

  FeatureLayout layout;
  layout.roster = roster_of(train_lines, test_lines);
  layout.groups = options.features;
  layout.relation_vocab = relation_vocabulary(train_cands);

  FeaturizeOptions fopts;
  fopts.jobs = options.jobs;
  std::vector<FeatureVector> train_rows =
      featurize(train_cands, layout, &train.queries, train_corpus, fopts, diag);

  TrainOptions topts;
  topts.lambda = options.lambda;
  topts.jobs = options.jobs;
  if (options.tune) topts.lambda = tune_lambda(train_rows, layout, topts);
  const TrainResult trained = slotfuse::train(train_rows, layout, topts);

  std::vector<Candidate> test_cands = group_candidates(test_lines);
  fopts.strict_relations = false;
  const std::vector<FeatureVector> test_rows =
      featurize(test_cands, layout, &test.queries, test_corpus, fopts, diag);
  const std::vector<Prediction> preds =
      predict(trained.model, test_rows, options.threshold, options.jobs);

  std::vector<ScoredCandidate> accepted;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].accepted) accepted.push_back({test_cands[i], preds[i].probability});
  }
  accepted = select_single_valued(std::move(accepted), registry);
  std::vector<Candidate> selected;
  selected.reserve(accepted.size());
  for (ScoredCandidate& sc : accepted) selected.push_back(std::move(sc.candidate));
  row.stacker_f1 = official_f1(to_run_lines(selected, "STACKER"), test.key, diag);

  row.union_f1 =
      official_f1(to_run_lines(union_ensemble(test_cands, registry), "UNION"), test.key, diag);

  const int pool = static_cast<int>(layout.roster.size());
  const int k_learned = learn_threshold(train_cands, train.key, pool, registry);
  row.voting_f1 = official_f1(
      to_run_lines(voting_ensemble(test_cands, k_learned, registry), "VOTE"), test.key, diag);

  const auto [k_oracle, curve] = oracle_threshold(test_cands, test.key, pool, registry);
  for (const PrPoint& point : curve.points) {
    if (point.k == k_oracle) row.oracle_voting_f1 = point.f1;
  }

  std::map<std::string, std::vector<ResponseLine>> by_system;
  for (const ResponseLine& line : test_lines) by_system[line.run_id].push_back(line);
  for (const auto& [run_id, lines] : by_system) {
    const double f1 = official_f1(lines, test.key, diag);
    if (row.best_system.empty() || f1 > row.best_single_f1) {
      row.best_single_f1 = f1;
      row.best_system = run_id;
    }
  }
  return row;
}

// Distinct assessed-wrong fills each system contributed to the train pool,
// the sort key of the incremental sweep.
std::map<std::string, std::size_t> false_positive_counts(const Bundle& train) {
  std::set<std::tuple<std::string, std::string, std::string>> wrong;
  for (const KeyEntry& entry : train.key) {
    if (!entry.correct) wrong.insert({entry.query_id, entry.slot, entry.fill_norm});
  }
  std::map<std::string, std::size_t> counts;
  for (const RunFile& run : train.runs) {
    counts[run.run_id];  // systems with zero false positives still rank
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const ResponseLine& line : run.lines) {
      if (line.nil) continue;
      auto key = std::make_tuple(line.query_id, line.slot, normalize_fill(line.filler));
      if (wrong.count(key) && seen.insert(key).second) ++counts[run.run_id];
    }
  }
  return counts;
}

std::vector<ResponseLine> lines_of_systems(const Bundle& bundle,
                                           const std::set<std::string>& run_ids) {
  std::vector<ResponseLine> lines;
  for (const RunFile& run : bundle.runs) {
    if (!run_ids.count(run.run_id)) continue;
    lines.insert(lines.end(), run.lines.begin(), run.lines.end());
  }
  return lines;
}

}  // namespace

ExperimentReport run_experiment(const Bundle& train, const Bundle& test,
                                const ExperimentOptions& options, Diagnostics& diag) {
  const bool needs_corpus = options.features.count(FeatureGroup::QSIM) > 0 ||
                            options.features.count(FeatureGroup::PSIM) > 0;
  CorpusIndex train_index;
  CorpusIndex test_index;
  if (needs_corpus) {
    train_index = index_corpus(train);
    test_index = index_corpus(test);
  }
  const CorpusIndex* train_corpus = needs_corpus ? &train_index : nullptr;
  const CorpusIndex* test_corpus = needs_corpus ? &test_index : nullptr;

  const std::vector<ResponseLine> all_train = pooled_lines(train);
  const std::vector<ResponseLine> all_test = pooled_lines(test);

  ExperimentReport report;
  switch (options.mode) {
    case ExperimentMode::SINGLE: {
      report.rows.push_back(evaluate("full", all_train, all_test, train, test, train_corpus,
                                     test_corpus, options, diag));
      break;
    }
    case ExperimentMode::LEARNING_CURVE: {
      std::vector<double> fractions = options.fractions;
      if (fractions.empty()) {
        for (int i = 1; i <= 10; ++i) fractions.push_back(0.1 * i);
      }
      std::vector<std::string> query_ids;
      for (const Query& query : train.queries) query_ids.push_back(query.id);
      std::sort(query_ids.begin(), query_ids.end());

      for (double fraction : fractions) {
        const std::size_t keep = std::min<std::size_t>(
            query_ids.size(),
            static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(query_ids.size()))));
        const std::set<std::string> prefix(query_ids.begin(), query_ids.begin() + keep);
        std::vector<ResponseLine> subset;
        for (const ResponseLine& line : all_train) {
          if (prefix.count(line.query_id)) subset.push_back(line);
        }
        report.rows.push_back(evaluate("fraction=" + format_fixed(fraction, 2), subset, all_test,
                                       train, test, train_corpus, test_corpus, options, diag));
      }
      break;
    }
    case ExperimentMode::INCREMENTAL: {
      const std::map<std::string, std::size_t> fp = false_positive_counts(train);
      std::vector<std::pair<std::string, std::size_t>> order(fp.begin(), fp.end());
      std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
      });

      std::set<std::string> selected;
      for (std::size_t k = 0; k < order.size(); ++k) {
        selected.insert(order[k].first);
        report.rows.push_back(evaluate(
            "systems=" + std::to_string(k + 1) + " +" + order[k].first,
            lines_of_systems(train, selected), lines_of_systems(test, selected), train, test,
            train_corpus, test_corpus, options, diag));
      }
      break;
    }
  }
  return report;
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out << "setting,train_candidates,stacker_f1,union_f1,voting_f1,oracle_voting_f1,"
         "best_single_f1,best_system\n";
  for (const ExperimentRow& row : rows) {
    out << row.setting << ',' << row.train_candidates << ',' << format_fixed(row.stacker_f1, 6)
        << ',' << format_fixed(row.union_f1, 6) << ',' << format_fixed(row.voting_f1, 6) << ','
        << format_fixed(row.oracle_voting_f1, 6) << ',' << format_fixed(row.best_single_f1, 6)
        << ',' << row.best_system << '\n';
  }
  return out.str();
}

}  // namespace slotfuse
