// The slotfuse command line: every pipeline stage as a subcommand, plus the
// end-to-end pipeline, the synthetic benchmark generator and the experiment
// harness. Logs go to standard error, data to files or standard output.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slotfuse/aggregator.hpp"
#include "slotfuse/baselines.hpp"
#include "slotfuse/experiment.hpp"
#include "slotfuse/features.hpp"
#include "slotfuse/ingest.hpp"
#include "slotfuse/model.hpp"
#include "slotfuse/postprocess.hpp"
#include "slotfuse/scorer.hpp"
#include "slotfuse/synth.hpp"
#include "slotfuse/text.hpp"
#include "slotfuse/util.hpp"

namespace {

using namespace slotfuse;

namespace fs = std::filesystem;

void flush_diagnostics(const Diagnostics& diag) {
  for (const std::string& w : diag.warnings) std::cerr << "warning: " << w << '\n';
  for (const std::string& n : diag.notes) std::cerr << "note: " << n << '\n';
}

// Empty path means standard output.
void emit(const std::string& content, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << content;
  } else {
    write_text_file(out_path, content);
  }
}

RunParseOptions run_parse_options(const std::string& format, bool strict) {
  RunParseOptions options;
  if (format == "2013") {
    options.format = RunFormat::V2013;
  } else if (format != "2014") {
    throw std::invalid_argument("unknown run format: " + format + " (expected 2014 or 2013)");
  }
  options.strict = strict;
  return options;
}

std::vector<RunFile> load_runs_dir(const fs::path& dir, const RunParseOptions& options,
                                   Diagnostics& diag) {
  if (!fs::is_directory(dir)) {
    throw std::invalid_argument("not a run directory: " + dir.string());
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tsv") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw std::invalid_argument("no .tsv run files in " + dir.string());
  std::vector<RunFile> runs;
  runs.reserve(paths.size());
  for (const fs::path& path : paths) {
    runs.push_back(parse_run_file(path, SlotRegistry::builtin(), options, diag));
  }
  return runs;
}

std::vector<ResponseLine> pool_runs(const std::vector<RunFile>& runs) {
  std::vector<ResponseLine> lines;
  for (const RunFile& run : runs) lines.insert(lines.end(), run.lines.begin(), run.lines.end());
  return lines;
}

std::set<FeatureGroup> parse_feature_list(const std::string& csv) {
  std::set<FeatureGroup> groups;
  for (std::string_view name : split(csv, ',')) {
    const auto group = parse_feature_group(trim(name));
    if (!group) throw std::invalid_argument("unknown feature group: " + std::string(name));
    groups.insert(*group);
  }
  if (groups.empty()) throw std::invalid_argument("empty feature list");
  return groups;
}

std::string write_predictions(const std::vector<Prediction>& preds) {
  std::ostringstream out;
  out << "query_id\tslot\tfill\tprobability\taccepted\n";
  for (const Prediction& p : preds) {
    out << p.query_id << '\t' << p.slot << '\t' << p.fill_norm << '\t'
        << format_exact(p.probability) << '\t' << (p.accepted ? '1' : '0') << '\n';
  }
  return out.str();
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::vector<std::string_view> lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty() || lines[0] != "query_id\tslot\tfill\tprobability\taccepted") {
    throw std::invalid_argument(path.string() + ": not a predictions file");
  }
  std::vector<Prediction> preds;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split(lines[i], '\t');
    if (cols.size() != 5) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(i + 1) +
                                  ": expected 5 columns");
    }
    const auto probability = parse_double(cols[3]);
    if (!probability) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(i + 1) +
                                  ": bad probability: " + std::string(cols[3]));
    }
    Prediction p;
    p.query_id = std::string(cols[0]);
    p.slot = std::string(cols[1]);
    p.fill_norm = std::string(cols[2]);
    p.probability = *probability;
    p.accepted = cols[4] == "1";
    preds.push_back(std::move(p));
  }
  return preds;
}

std::vector<SystemProfile> parse_system_specs(const std::string& csv) {
  std::vector<SystemProfile> systems;
  for (std::string_view chunk : split(csv, ',')) {
    const auto parts = split(trim(chunk), ':');
    if (parts.size() != 3) {
      throw std::invalid_argument("system spec must be id:precision:recall, got: " +
                                  std::string(chunk));
    }
    const auto precision = parse_double(parts[1]);
    const auto recall = parse_double(parts[2]);
    if (!precision || !recall) {
      throw std::invalid_argument("bad system spec numbers: " + std::string(chunk));
    }
    SystemProfile profile;
    profile.run_id = std::string(parts[0]);
    profile.precision = *precision;
    profile.recall = *recall;
    systems.push_back(std::move(profile));
  }
  return systems;
}

// The published reference roster: eight systems spanning the configured
// precision and recall ranges.
std::vector<SystemProfile> default_system_specs() {
  std::vector<SystemProfile> systems;
  for (int i = 0; i < 8; ++i) {
    SystemProfile profile;
    profile.run_id = "sys" + std::to_string(i + 1);
    profile.precision = 0.35 + 0.45 * static_cast<double>(i) / 7.0;
    profile.recall = 0.25 + 0.30 * static_cast<double>(i) / 7.0;
    systems.push_back(std::move(profile));
  }
  return systems;
}

// ---- validate ----------------------------------------------------------

struct ValidateArgs {
  std::string runs_dir;
  std::string queries_path;
  std::string key_path;
  std::string corpus_dir;
  std::string aliases_path;
  std::string budgets_path;
  std::string classes_path;
  std::string format = "2014";
  bool strict = false;
  int jobs = 1;
};

void run_validate(const ValidateArgs& args) {
  Diagnostics diag;
  std::ostringstream report;

  const std::vector<RunFile> runs =
      load_runs_dir(args.runs_dir, run_parse_options(args.format, args.strict), diag);
  report << "runs: " << runs.size() << '\n';
  for (const RunFile& run : runs) {
    std::size_t nil = 0;
    for (const ResponseLine& line : run.lines) nil += line.nil ? 1 : 0;
    report << "  " << run.run_id << " (team " << run.team_id << "): " << run.lines.size()
           << " lines, " << nil << " NIL\n";
  }

  std::set<std::string> query_ids;
  if (!args.queries_path.empty()) {
    const std::vector<Query> queries =
        parse_queries(read_text_file(args.queries_path), SlotRegistry::builtin());
    for (const Query& query : queries) query_ids.insert(query.id);
    report << "queries: " << queries.size() << '\n';
  }
  if (!args.key_path.empty()) {
    const std::vector<KeyEntry> key = parse_key(args.key_path);
    std::size_t correct = 0;
    for (const KeyEntry& entry : key) correct += entry.correct ? 1 : 0;
    report << "key entries: " << key.size() << " (" << correct << " correct)\n";
  }
  if (!args.aliases_path.empty()) {
    const AliasTable aliases = load_alias_table(args.aliases_path);
    report << "alias table: " << aliases.size() << " canonical forms\n";
  }
  if (!args.budgets_path.empty()) {
    const BudgetTable budgets =
        BudgetTable::parse_tsv(read_text_file(args.budgets_path), args.budgets_path);
    report << "budget entries: " << budgets.slot_budget.size() + budgets.entity_budget.size()
           << '\n';
  }
  if (!args.classes_path.empty()) {
    SlotClassTable::parse_tsv(read_text_file(args.classes_path), args.classes_path);
    report << "slot class table: ok\n";
  }

  CorpusIndex corpus;
  if (!args.corpus_dir.empty()) {
    corpus = build_corpus_index(args.corpus_dir, args.jobs);
    report << "corpus documents: " << corpus.document_count() << '\n';
  }

  // Cross-checks between the pieces that were given.
  std::size_t unknown_queries = 0;
  std::size_t missing_docs = 0;
  for (const RunFile& run : runs) {
    for (const ResponseLine& line : run.lines) {
      if (!query_ids.empty() && !query_ids.count(line.query_id)) ++unknown_queries;
      if (!args.corpus_dir.empty() && line.filler_provenance &&
          !corpus.has_document(line.filler_provenance->doc_id)) {
        ++missing_docs;
      }
    }
  }
  if (unknown_queries > 0) {
    diag.warn(std::to_string(unknown_queries) + " response lines reference unknown query ids");
  }
  if (missing_docs > 0) {
    diag.warn(std::to_string(missing_docs) + " filler provenances cite documents not in corpus");
  }
  report << "warnings: " << diag.warning_count() << '\n';
  std::cout << report.str();
  flush_diagnostics(diag);
}

// ---- featurize ---------------------------------------------------------

struct FeaturizeArgs {
  std::string runs_dir;
  std::string queries_path;
  std::string key_path;
  std::string corpus_dir;
  std::string layout_from;  // reuse the layout of an existing matrix
  std::string features = "conf,dps,op,rel";
  std::string format = "2014";
  bool strict = false;
  bool dps_mean = false;
  bool op_max = false;
  bool smooth_idf = false;
  bool log_tf = false;
  bool lenient_relations = false;
  std::string out;
  int jobs = 1;
};

void run_featurize(const FeaturizeArgs& args) {
  Diagnostics diag;
  const std::vector<RunFile> runs =
      load_runs_dir(args.runs_dir, run_parse_options(args.format, args.strict), diag);
  std::vector<Candidate> candidates = group_candidates(pool_runs(runs));
  if (!args.key_path.empty()) {
    label_candidates(candidates, parse_key(args.key_path), diag);
  }

  FeatureLayout layout;
  if (!args.layout_from.empty()) {
    std::ifstream in(args.layout_from);
    if (!in) throw std::invalid_argument("cannot open layout source: " + args.layout_from);
    layout = read_feature_matrix(in, args.layout_from).first;
  } else {
    for (const RunFile& run : runs) layout.roster.push_back(run.run_id);
    std::sort(layout.roster.begin(), layout.roster.end());
    layout.groups = parse_feature_list(args.features);
    layout.relation_vocab = relation_vocabulary(candidates);
  }

  std::vector<Query> queries;
  const std::vector<Query>* queries_ptr = nullptr;
  if (!args.queries_path.empty()) {
    queries = parse_queries(read_text_file(args.queries_path), SlotRegistry::builtin());
    queries_ptr = &queries;
  }
  CorpusIndex corpus;
  const CorpusIndex* corpus_ptr = nullptr;
  if (!args.corpus_dir.empty()) {
    corpus = build_corpus_index(args.corpus_dir, args.jobs);
    corpus_ptr = &corpus;
  }

  FeaturizeOptions options;
  options.tfidf.smooth_idf = args.smooth_idf;
  options.tfidf.log_tf = args.log_tf;
  options.aggregation.dps =
      args.dps_mean ? ProvenanceAggregation::Mode::MEAN : ProvenanceAggregation::Mode::MAX;
  options.aggregation.op =
      args.op_max ? ProvenanceAggregation::Mode::MAX : ProvenanceAggregation::Mode::MEAN;
  options.strict_relations = !args.lenient_relations;
  options.jobs = args.jobs;

  const std::vector<FeatureVector> rows =
      featurize(candidates, layout, queries_ptr, corpus_ptr, options, diag);
  emit(write_feature_matrix(layout, rows), args.out);
  flush_diagnostics(diag);
}

// ---- train / predict ---------------------------------------------------

struct TrainArgs {
  std::string matrix_path;
  std::string model_path;
  double lambda = 0.01;
  bool tune = false;
  double tolerance = 1e-8;
  int max_iterations = 5000;
  std::string loss = "logistic";
  bool standardize = false;
  int jobs = 1;
};

void run_train(const TrainArgs& args) {
  std::ifstream in(args.matrix_path);
  if (!in) throw std::invalid_argument("cannot open matrix: " + args.matrix_path);
  const auto [layout, rows] = read_feature_matrix(in, args.matrix_path);

  TrainOptions options;
  options.lambda = args.lambda;
  options.tolerance = args.tolerance;
  options.max_iterations = args.max_iterations;
  const auto loss = parse_loss_kind(args.loss);
  if (!loss) throw std::invalid_argument("unknown loss: " + args.loss);
  options.loss = *loss;
  options.standardize = args.standardize;
  options.jobs = args.jobs;
  if (args.tune) {
    options.lambda = tune_lambda(rows, layout, options);
    std::cerr << "tuned lambda: " << format_exact(options.lambda) << '\n';
  }

  const TrainResult result = train(rows, layout, options);
  result.model.save(args.model_path);
  std::cerr << "trained on " << rows.size() << " rows: " << result.model.iterations
            << " iterations, " << (result.converged ? "converged" : "iteration limit")
            << ", objective " << format_exact(result.model.final_objective) << ", "
            << result.model.nonzero_weights() << '/' << layout.dimension()
            << " nonzero weights\n";
}

struct PredictArgs {
  std::string matrix_path;
  std::string model_path;
  double threshold = 0.5;
  std::string out;
  int jobs = 1;
};

void run_predict(const PredictArgs& args) {
  const LinearModel model = LinearModel::load(args.model_path);
  std::ifstream in(args.matrix_path);
  if (!in) throw std::invalid_argument("cannot open matrix: " + args.matrix_path);
  const auto [layout, rows] = read_feature_matrix(in, args.matrix_path);
  if (!(layout == model.layout)) {
    throw std::invalid_argument("matrix layout does not match the model layout");
  }
  emit(write_predictions(predict(model, rows, args.threshold, args.jobs)), args.out);
}

// ---- aggregate ---------------------------------------------------------

struct AggregateArgs {
  std::string runs_dir;
  std::string budgets_path;
  std::string format = "2014";
  bool strict = false;
  std::string out;
  int jobs = 1;
};

void run_aggregate(const AggregateArgs& args) {
  Diagnostics diag;
  const std::vector<RunFile> runs =
      load_runs_dir(args.runs_dir, run_parse_options(args.format, args.strict), diag);

  std::map<std::string, std::vector<RunFile>> teams;
  for (const RunFile& run : runs) teams[run.team_id].push_back(run);
  std::vector<RunFile> team_runs;
  team_runs.reserve(teams.size());
  for (auto& [team, members] : teams) team_runs.push_back(combine_team_runs(members));

  BudgetTable budgets;
  if (!args.budgets_path.empty()) {
    budgets = BudgetTable::parse_tsv(read_text_file(args.budgets_path), args.budgets_path);
  }
  const RunFile ensemble = build_unsupervised_ensemble(team_runs, budgets,
                                                       SlotRegistry::builtin(), args.jobs, diag);
  emit(write_run_file(ensemble.lines), args.out);
  flush_diagnostics(diag);
}

// ---- baseline ----------------------------------------------------------

struct BaselineArgs {
  std::string runs_dir;
  std::string format = "2014";
  bool strict = false;
  std::string out;
  // vote only:
  int k = 0;
  bool learn = false;
  std::string train_runs_dir;
  std::string train_key_path;
  bool oracle = false;
  std::string key_path;
  std::string curve_out;
};

void run_baseline_union(const BaselineArgs& args) {
  Diagnostics diag;
  const std::vector<RunFile> runs =
      load_runs_dir(args.runs_dir, run_parse_options(args.format, args.strict), diag);
  const std::vector<Candidate> candidates = group_candidates(pool_runs(runs));
  const std::vector<Candidate> selected = union_ensemble(candidates, SlotRegistry::builtin());
  emit(write_run_file(to_run_lines(selected, "UNION")), args.out);
  flush_diagnostics(diag);
}

void run_baseline_vote(const BaselineArgs& args) {
  const int picked = (args.k > 0 ? 1 : 0) + (args.learn ? 1 : 0) + (args.oracle ? 1 : 0);
  if (picked != 1) {
    throw CLI::ValidationError("baseline vote", "pick exactly one of --k, --learn, --oracle");
  }
  Diagnostics diag;
  const SlotRegistry& registry = SlotRegistry::builtin();
  const std::vector<RunFile> runs =
      load_runs_dir(args.runs_dir, run_parse_options(args.format, args.strict), diag);
  const std::vector<Candidate> candidates = group_candidates(pool_runs(runs));

  int k = args.k;
  std::string run_id = "VOTE";
  if (args.learn) {
    if (args.train_runs_dir.empty() || args.train_key_path.empty()) {
      throw CLI::ValidationError("baseline vote", "--learn needs --train-runs and --train-key");
    }
    const std::vector<RunFile> train_runs =
        load_runs_dir(args.train_runs_dir, run_parse_options(args.format, args.strict), diag);
    const std::vector<Candidate> train_cands = group_candidates(pool_runs(train_runs));
    k = learn_threshold(train_cands, parse_key(args.train_key_path),
                        static_cast<int>(train_runs.size()), registry);
    std::cerr << "learned voting threshold: " << k << '\n';
  } else if (args.oracle) {
    if (args.key_path.empty()) {
      throw CLI::ValidationError("baseline vote", "--oracle needs --key");
    }
    const auto [best_k, curve] = oracle_threshold(candidates, parse_key(args.key_path),
                                                  static_cast<int>(runs.size()), registry);
    k = best_k;
    run_id = "ORACLE_VOTE";
    std::cerr << "oracle voting threshold (picked with the test key, unfair upper bound): " << k
              << '\n';
    if (!args.curve_out.empty()) write_text_file(args.curve_out, curve.to_csv());
  }

  const std::vector<Candidate> selected = voting_ensemble(candidates, k, registry);
  emit(write_run_file(to_run_lines(selected, run_id)), args.out);
  flush_diagnostics(diag);
}

// ---- postprocess -------------------------------------------------------

struct PostprocessArgs {
  std::string runs_dir;
  std::string predictions_path;
  std::string aliases_path;
  std::string classes_path;
  std::string format = "2014";
  bool strict = false;
  std::string run_id = "SLOTFUSE";
  std::string out;
  int jobs = 1;
  // NIL link mode:
  std::vector<std::string> link_paths;
  bool exact_offsets = false;
};

void run_postprocess(const PostprocessArgs& args) {
  if (!args.link_paths.empty()) {
    std::vector<MentionLink> links;
    for (const std::string& path : args.link_paths) {
      std::vector<MentionLink> part = parse_links(read_text_file(path), path);
      links.insert(links.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
    }
    NilMergeOptions options;
    options.exact_offsets = args.exact_offsets;
    emit(write_links(merge_nil_clusters(std::move(links), options)), args.out);
    return;
  }

  if (args.runs_dir.empty() || args.predictions_path.empty()) {
    throw CLI::ValidationError("postprocess", "need --runs and --predictions (or --links)");
  }
  Diagnostics diag;
  const std::vector<RunFile> runs =
      load_runs_dir(args.runs_dir, run_parse_options(args.format, args.strict), diag);
  const std::vector<Candidate> candidates = group_candidates(pool_runs(runs));
  std::map<std::tuple<std::string, std::string, std::string>, const Candidate*> by_key;
  for (const Candidate& candidate : candidates) {
    by_key[{candidate.query_id, candidate.slot, candidate.fill_norm}] = &candidate;
  }

  std::vector<ScoredCandidate> accepted;
  for (const Prediction& p : read_predictions(args.predictions_path)) {
    if (!p.accepted) continue;
    const auto it = by_key.find({p.query_id, p.slot, p.fill_norm});
    if (it == by_key.end()) {
      throw std::invalid_argument("prediction has no matching candidate: " + p.query_id + " " +
                                  p.slot + " " + p.fill_norm);
    }
    accepted.push_back({*it->second, p.probability});
  }

  AliasTable aliases;
  if (!args.aliases_path.empty()) aliases = load_alias_table(args.aliases_path);
  SlotClassTable classes = SlotClassTable::builtin();
  if (!args.classes_path.empty()) {
    classes = SlotClassTable::parse_tsv(read_text_file(args.classes_path), args.classes_path);
  }

  const std::vector<ScoredCandidate> kept =
      postprocess(std::move(accepted), aliases, classes, SlotRegistry::builtin(), args.jobs);

  // The ensemble's own run file: best supporting line per kept candidate,
  // confidence replaced by the meta-classifier probability.
  std::vector<ResponseLine> lines;
  lines.reserve(kept.size());
  for (const ScoredCandidate& sc : kept) {
    const ResponseLine* best = nullptr;
    for (const auto& [system, line] : sc.candidate.responses) {
      if (!best || prefer_line(line, *best)) best = &line;
    }
    ResponseLine line = *best;
    line.run_id = args.run_id;
    line.confidence = sc.probability;
    lines.push_back(std::move(line));
  }
  emit(write_run_file(lines), args.out);
  flush_diagnostics(diag);
}

// ---- score -------------------------------------------------------------

struct ScoreArgs {
  std::string run_path;
  std::string key_path;
  std::string mode = "official";
  std::string aliases_path;
  std::string format = "2014";
  bool csv = false;
  std::string out;
};

void run_score(const ScoreArgs& args) {
  Diagnostics diag;
  const auto mode = parse_score_mode(args.mode);
  if (!mode) throw std::invalid_argument("unknown score mode: " + args.mode);
  const RunFile run =
      parse_run_file(args.run_path, SlotRegistry::builtin(), run_parse_options(args.format, false),
                     diag);
  const std::vector<KeyEntry> key = parse_key(args.key_path);

  AliasTable aliases;
  const AliasTable* aliases_ptr = nullptr;
  if (!args.aliases_path.empty()) {
    aliases = load_alias_table(args.aliases_path);
    aliases_ptr = &aliases;
  }
  const ScoreReport report = score(run.lines, key, *mode, aliases_ptr, diag);
  emit(args.csv ? report.to_csv() : report.to_text(), args.out);
  flush_diagnostics(diag);
}

// ---- synth -------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::uint64_t seed = 1;
  int queries = 100;
  int slots_per_query = 3;
  std::string systems;
  double doc_agreement = 0.7;
  double offset_jitter = 2.0;
  double confidence_noise = 0.1;
  int corpus_docs = 200;
  int distractor_vocab = 40;
};

GeneratorConfig generator_config(const SynthArgs& args) {
  GeneratorConfig config;
  config.seed = args.seed;
  config.n_queries = args.queries;
  config.slots_per_query = args.slots_per_query;
  config.systems =
      args.systems.empty() ? default_system_specs() : parse_system_specs(args.systems);
  config.doc_agreement = args.doc_agreement;
  config.offset_jitter = args.offset_jitter;
  config.confidence_noise = args.confidence_noise;
  config.corpus_docs = args.corpus_docs;
  config.distractor_vocab = args.distractor_vocab;
  return config;
}

void run_synth(const SynthArgs& args) {
  const auto [train, test] = generate(generator_config(args));
  write_bundle(train, fs::path(args.out_dir) / "train");
  write_bundle(test, fs::path(args.out_dir) / "test");
  std::cerr << "wrote train (" << train.queries.size() << " queries, " << train.runs.size()
            << " runs) and test (" << test.queries.size() << " queries) under " << args.out_dir
            << '\n';
}

// ---- experiment --------------------------------------------------------

struct ExperimentArgs {
  std::string train_dir;
  std::string test_dir;
  SynthArgs synth;  // used when no bundle directories are given
  std::string features = "conf,dps,op,rel";
  double lambda = 0.01;
  bool tune = false;
  double threshold = 0.5;
  bool learning_curve = false;
  bool incremental = false;
  std::string out;
  int jobs = 1;
};

void run_experiment_cmd(const ExperimentArgs& args) {
  if (args.learning_curve && args.incremental) {
    throw CLI::ValidationError("experiment", "--learning-curve and --incremental are exclusive");
  }
  Diagnostics diag;
  Bundle train;
  Bundle test;
  if (!args.train_dir.empty() || !args.test_dir.empty()) {
    if (args.train_dir.empty() || args.test_dir.empty()) {
      throw CLI::ValidationError("experiment", "--train and --test go together");
    }
    train = load_bundle(args.train_dir, SlotRegistry::builtin(), diag);
    test = load_bundle(args.test_dir, SlotRegistry::builtin(), diag);
  } else {
    std::tie(train, test) = generate(generator_config(args.synth));
  }

  ExperimentOptions options;
  options.features = parse_feature_list(args.features);
  options.lambda = args.lambda;
  options.tune = args.tune;
  options.threshold = args.threshold;
  options.mode = args.learning_curve ? ExperimentMode::LEARNING_CURVE
               : args.incremental   ? ExperimentMode::INCREMENTAL
                                    : ExperimentMode::SINGLE;
  options.jobs = args.jobs;

  const ExperimentReport report = run_experiment(train, test, options, diag);
  emit(report.to_csv(), args.out);
  flush_diagnostics(diag);
}

// ---- pipeline ----------------------------------------------------------

struct PipelineArgs {
  std::string train_dir;
  std::string test_dir;
  std::string out_dir;
  std::string features = "conf,dps,op,rel";
  double lambda = 0.01;
  bool tune = false;
  double threshold = 0.5;
  std::string mode = "official";
  std::string run_id = "SLOTFUSE";
  std::string aliases_path;
  std::string classes_path;
  int jobs = 1;
};

// Runs the stage subcommands in sequence over files in out_dir, so the
// pipeline output is exactly what running the stages by hand produces.
void run_pipeline(const PipelineArgs& args) {
  const fs::path train_dir(args.train_dir);
  const fs::path test_dir(args.test_dir);
  const fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);

  const std::set<FeatureGroup> groups = parse_feature_list(args.features);
  const bool needs_corpus =
      groups.count(FeatureGroup::QSIM) > 0 || groups.count(FeatureGroup::PSIM) > 0;

  FeaturizeArgs ftrain;
  ftrain.runs_dir = (train_dir / "runs").string();
  ftrain.queries_path = (train_dir / "queries.xml").string();
  ftrain.key_path = (train_dir / "key.tsv").string();
  if (needs_corpus) ftrain.corpus_dir = (train_dir / "corpus").string();
  ftrain.features = args.features;
  ftrain.out = (out_dir / "train_matrix.tsv").string();
  ftrain.jobs = args.jobs;
  run_featurize(ftrain);

  TrainArgs t;
  t.matrix_path = ftrain.out;
  t.model_path = (out_dir / "model.json").string();
  t.lambda = args.lambda;
  t.tune = args.tune;
  t.jobs = args.jobs;
  run_train(t);

  FeaturizeArgs ftest;
  ftest.runs_dir = (test_dir / "runs").string();
  ftest.queries_path = (test_dir / "queries.xml").string();
  if (needs_corpus) ftest.corpus_dir = (test_dir / "corpus").string();
  ftest.layout_from = ftrain.out;
  ftest.lenient_relations = true;
  ftest.out = (out_dir / "test_matrix.tsv").string();
  ftest.jobs = args.jobs;
  run_featurize(ftest);

  PredictArgs p;
  p.matrix_path = ftest.out;
  p.model_path = t.model_path;
  p.threshold = args.threshold;
  p.out = (out_dir / "predictions.tsv").string();
  p.jobs = args.jobs;
  run_predict(p);

  PostprocessArgs post;
  post.runs_dir = ftest.runs_dir;
  post.predictions_path = p.out;
  post.aliases_path = args.aliases_path;
  post.classes_path = args.classes_path;
  post.run_id = args.run_id;
  post.out = (out_dir / "ensemble.tsv").string();
  post.jobs = args.jobs;
  run_postprocess(post);

  ScoreArgs s;
  s.run_path = post.out;
  s.key_path = (test_dir / "key.tsv").string();
  s.mode = args.mode;
  s.aliases_path = args.aliases_path;
  s.out = (out_dir / "score.txt").string();
  run_score(s);

  std::cout << read_text_file(out_dir / "score.txt");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slot-filling ensemble toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config")->envname("SLOTFUSE_CONFIG");

  ValidateArgs validate_args;
  CLI::App* validate = app.add_subcommand("validate", "parse inputs and report anomalies");
  validate->add_option("--runs", validate_args.runs_dir, "run file directory")->required();
  validate->add_option("--queries", validate_args.queries_path, "query XML");
  validate->add_option("--key", validate_args.key_path, "assessment key TSV");
  validate->add_option("--corpus", validate_args.corpus_dir, "corpus directory");
  validate->add_option("--aliases", validate_args.aliases_path, "alias table TSV");
  validate->add_option("--budgets", validate_args.budgets_path, "budget table TSV");
  validate->add_option("--slot-classes", validate_args.classes_path, "slot class TSV");
  validate->add_option("--format", validate_args.format, "run format: 2014 or 2013");
  validate->add_flag("--strict", validate_args.strict, "unknown slots are errors");
  validate->add_option("--jobs", validate_args.jobs, "worker threads");
  validate->callback([&] { run_validate(validate_args); });

  FeaturizeArgs featurize_args;
  CLI::App* featurize = app.add_subcommand("featurize", "build the feature matrix");
  featurize->add_option("--runs", featurize_args.runs_dir, "run file directory")->required();
  featurize->add_option("--queries", featurize_args.queries_path, "query XML");
  featurize->add_option("--key", featurize_args.key_path, "key TSV for labels");
  featurize->add_option("--corpus", featurize_args.corpus_dir, "corpus directory");
  featurize->add_option("--layout-from", featurize_args.layout_from,
                        "reuse the layout of this matrix");
  featurize->add_option("--features", featurize_args.features,
                        "comma list of conf,qsim,psim,dps,op,relprov,rel");
  featurize->add_option("--format", featurize_args.format, "run format: 2014 or 2013");
  featurize->add_flag("--strict", featurize_args.strict, "unknown slots are errors");
  featurize->add_flag("--dps-mean", featurize_args.dps_mean, "aggregate DPS by mean, not max");
  featurize->add_flag("--op-max", featurize_args.op_max, "aggregate OP by max, not mean");
  featurize->add_flag("--smooth-idf", featurize_args.smooth_idf, "smoothed idf");
  featurize->add_flag("--log-tf", featurize_args.log_tf, "logarithmic term frequency");
  featurize->add_flag("--lenient-relations", featurize_args.lenient_relations,
                      "zero one-hot for slots outside the vocabulary");
  featurize->add_option("--out", featurize_args.out, "matrix TSV (default stdout)");
  featurize->add_option("--jobs", featurize_args.jobs, "worker threads");
  featurize->callback([&] { run_featurize(featurize_args); });

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train the meta-classifier");
  train_cmd->add_option("--matrix", train_args.matrix_path, "labeled matrix TSV")->required();
  train_cmd->add_option("--model", train_args.model_path, "output model JSON")->required();
  train_cmd->add_option("--lambda", train_args.lambda, "L1 strength");
  train_cmd->add_flag("--tune", train_args.tune, "grid-search lambda on a held-out split");
  train_cmd->add_option("--tolerance", train_args.tolerance, "relative objective tolerance");
  train_cmd->add_option("--max-iterations", train_args.max_iterations, "iteration cap");
  train_cmd->add_option("--loss", train_args.loss, "logistic or squared_hinge");
  train_cmd->add_flag("--standardize", train_args.standardize, "standardize features");
  train_cmd->add_option("--jobs", train_args.jobs, "worker threads");
  train_cmd->callback([&] { run_train(train_args); });

  PredictArgs predict_args;
  CLI::App* predict_cmd = app.add_subcommand("predict", "score candidates with a model");
  predict_cmd->add_option("--matrix", predict_args.matrix_path, "matrix TSV")->required();
  predict_cmd->add_option("--model", predict_args.model_path, "model JSON")->required();
  predict_cmd->add_option("--threshold", predict_args.threshold, "acceptance threshold");
  predict_cmd->add_option("--out", predict_args.out, "predictions TSV (default stdout)");
  predict_cmd->add_option("--jobs", predict_args.jobs, "worker threads");
  predict_cmd->callback([&] { run_predict(predict_args); });

  AggregateArgs aggregate_args;
  CLI::App* aggregate = app.add_subcommand("aggregate", "unsupervised confidence ensemble");
  aggregate->add_option("--runs", aggregate_args.runs_dir, "run file directory")->required();
  aggregate->add_option("--budgets", aggregate_args.budgets_path, "budget table TSV");
  aggregate->add_option("--format", aggregate_args.format, "run format: 2014 or 2013");
  aggregate->add_flag("--strict", aggregate_args.strict, "unknown slots are errors");
  aggregate->add_option("--out", aggregate_args.out, "ensemble run TSV (default stdout)");
  aggregate->add_option("--jobs", aggregate_args.jobs, "worker threads");
  aggregate->callback([&] { run_aggregate(aggregate_args); });

  BaselineArgs baseline_args;
  CLI::App* baseline = app.add_subcommand("baseline", "ensemble baselines");
  baseline->require_subcommand(1);
  CLI::App* b_union = baseline->add_subcommand("union", "accept every candidate");
  b_union->add_option("--runs", baseline_args.runs_dir, "run file directory")->required();
  b_union->add_option("--format", baseline_args.format, "run format: 2014 or 2013");
  b_union->add_option("--out", baseline_args.out, "run TSV (default stdout)");
  b_union->callback([&] { run_baseline_union(baseline_args); });
  CLI::App* b_vote = baseline->add_subcommand("vote", "agreement-threshold voting");
  b_vote->add_option("--runs", baseline_args.runs_dir, "run file directory")->required();
  b_vote->add_option("--format", baseline_args.format, "run format: 2014 or 2013");
  b_vote->add_option("--k", baseline_args.k, "fixed agreement threshold");
  b_vote->add_flag("--learn", baseline_args.learn, "learn the threshold on training data");
  b_vote->add_option("--train-runs", baseline_args.train_runs_dir, "training run directory");
  b_vote->add_option("--train-key", baseline_args.train_key_path, "training key TSV");
  b_vote->add_flag("--oracle", baseline_args.oracle, "pick the threshold with the test key");
  b_vote->add_option("--key", baseline_args.key_path, "test key TSV for --oracle");
  b_vote->add_option("--curve", baseline_args.curve_out, "oracle precision/recall curve CSV");
  b_vote->add_option("--out", baseline_args.out, "run TSV (default stdout)");
  b_vote->callback([&] { run_baseline_vote(baseline_args); });

  PostprocessArgs postprocess_args;
  CLI::App* post = app.add_subcommand("postprocess", "dedup accepted fills or merge NIL links");
  post->add_option("--runs", postprocess_args.runs_dir, "run file directory");
  post->add_option("--predictions", postprocess_args.predictions_path, "predictions TSV");
  post->add_option("--aliases", postprocess_args.aliases_path, "alias table TSV");
  post->add_option("--slot-classes", postprocess_args.classes_path, "slot class TSV");
  post->add_option("--format", postprocess_args.format, "run format: 2014 or 2013");
  post->add_option("--run-id", postprocess_args.run_id, "output run id");
  post->add_option("--links", postprocess_args.link_paths, "link TSVs to merge NIL clusters of");
  post->add_flag("--exact-offsets", postprocess_args.exact_offsets,
                 "merge only on identical spans");
  post->add_option("--out", postprocess_args.out, "output (default stdout)");
  post->add_option("--jobs", postprocess_args.jobs, "worker threads");
  post->callback([&] { run_postprocess(postprocess_args); });

  ScoreArgs score_args;
  CLI::App* score_cmd = app.add_subcommand("score", "precision/recall/F1 against a key");
  score_cmd->add_option("--run", score_args.run_path, "run TSV")->required();
  score_cmd->add_option("--key", score_args.key_path, "key TSV")->required();
  score_cmd->add_option("--mode", score_args.mode, "official or unofficial");
  score_cmd->add_option("--aliases", score_args.aliases_path, "alias table TSV");
  score_cmd->add_option("--format", score_args.format, "run format: 2014 or 2013");
  score_cmd->add_flag("--csv", score_args.csv, "CSV instead of text");
  score_cmd->add_option("--out", score_args.out, "output (default stdout)");
  score_cmd->callback([&] { run_score(score_args); });

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate synthetic train/test bundles");
  synth->add_option("--out-dir", synth_args.out_dir, "bundle parent directory")->required();
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--queries", synth_args.queries, "queries per bundle");
  synth->add_option("--slots-per-query", synth_args.slots_per_query, "slots per query");
  synth->add_option("--systems", synth_args.systems,
                    "comma list of id:precision:recall (default: 8-system reference roster)");
  synth->add_option("--doc-agreement", synth_args.doc_agreement,
                    "chance a correct fill cites the gold document");
  synth->add_option("--offset-jitter", synth_args.offset_jitter, "span noise, characters");
  synth->add_option("--confidence-noise", synth_args.confidence_noise, "calibration noise");
  synth->add_option("--corpus-docs", synth_args.corpus_docs, "documents per bundle");
  synth->add_option("--distractor-vocab", synth_args.distractor_vocab,
                    "shared wrong fills per slot");
  synth->callback([&] { run_synth(synth_args); });

  ExperimentArgs experiment_args;
  CLI::App* experiment = app.add_subcommand("experiment", "stacker vs baselines comparison");
  experiment->add_option("--train", experiment_args.train_dir, "training bundle directory");
  experiment->add_option("--test", experiment_args.test_dir, "test bundle directory");
  experiment->add_option("--seed", experiment_args.synth.seed, "generator seed");
  experiment->add_option("--queries", experiment_args.synth.queries, "queries per bundle");
  experiment->add_option("--slots-per-query", experiment_args.synth.slots_per_query,
                         "slots per query");
  experiment->add_option("--systems", experiment_args.synth.systems,
                         "generator systems as id:precision:recall");
  experiment->add_option("--doc-agreement", experiment_args.synth.doc_agreement,
                         "generator document agreement");
  experiment->add_option("--corpus-docs", experiment_args.synth.corpus_docs,
                         "generator corpus size");
  experiment->add_option("--features", experiment_args.features, "stacker feature groups");
  experiment->add_option("--lambda", experiment_args.lambda, "L1 strength");
  experiment->add_flag("--tune", experiment_args.tune, "grid-search lambda");
  experiment->add_option("--threshold", experiment_args.threshold, "acceptance threshold");
  experiment->add_flag("--learning-curve", experiment_args.learning_curve,
                       "sweep training fractions 0.1..1.0");
  experiment->add_flag("--incremental", experiment_args.incremental,
                       "add systems one at a time, worst false-positive count first");
  experiment->add_option("--out", experiment_args.out, "report CSV (default stdout)");
  experiment->add_option("--jobs", experiment_args.jobs, "worker threads");
  experiment->callback([&] { run_experiment_cmd(experiment_args); });

  PipelineArgs pipeline_args;
  CLI::App* pipeline = app.add_subcommand("pipeline", "featurize, train, predict, score");
  pipeline->add_option("--train", pipeline_args.train_dir, "training bundle directory")
      ->required();
  pipeline->add_option("--test", pipeline_args.test_dir, "test bundle directory")->required();
  pipeline->add_option("--out-dir", pipeline_args.out_dir, "artifact directory")->required();
  pipeline->add_option("--features", pipeline_args.features, "stacker feature groups");
  pipeline->add_option("--lambda", pipeline_args.lambda, "L1 strength");
  pipeline->add_flag("--tune", pipeline_args.tune, "grid-search lambda");
  pipeline->add_option("--threshold", pipeline_args.threshold, "acceptance threshold");
  pipeline->add_option("--mode", pipeline_args.mode, "score mode: official or unofficial");
  pipeline->add_option("--run-id", pipeline_args.run_id, "output run id");
  pipeline->add_option("--aliases", pipeline_args.aliases_path, "alias table TSV");
  pipeline->add_option("--slot-classes", pipeline_args.classes_path, "slot class TSV");
  pipeline->add_option("--jobs", pipeline_args.jobs, "worker threads");
  pipeline->callback([&] { run_pipeline(pipeline_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
