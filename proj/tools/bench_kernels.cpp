// Times the OpenMP kernel paths against their serial reference paths on a
// generated workload and verifies the outputs are bit-identical. jobs <= 1
// always takes the plain serial loop, so --jobs 1 vs --jobs N exercises
// both sides of every parallel_for in the library.

#include <chrono>
#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slotfuse/experiment.hpp"
#include "slotfuse/features.hpp"
#include "slotfuse/model.hpp"
#include "slotfuse/parallel.hpp"
#include "slotfuse/similarity.hpp"
#include "slotfuse/synth.hpp"

namespace {

using namespace slotfuse;

template <typename Fn>
double best_ms(int repeats, Fn&& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return best;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-22s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   %s\n", name.c_str(),
              serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "bit-identical" : "OUTPUTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel comparison"};
  int jobs = hardware_jobs();
  int queries = 400;
  int repeats = 3;
  std::uint64_t seed = 7;
  app.add_option("--jobs", jobs, "parallel worker count");
  app.add_option("--queries", queries, "workload size");
  app.add_option("--repeats", repeats, "timing repetitions, best kept");
  app.add_option("--seed", seed, "workload seed");
  CLI11_PARSE(app, argc, argv);

  GeneratorConfig config;
  config.seed = seed;
  config.n_queries = queries;
  config.corpus_docs = 3 * queries;
  for (int i = 0; i < 8; ++i) {
    SystemProfile profile;
    profile.run_id = "sys" + std::to_string(i + 1);
    profile.precision = 0.35 + 0.45 * static_cast<double>(i) / 7.0;
    profile.recall = 0.25 + 0.30 * static_cast<double>(i) / 7.0;
    config.systems.push_back(profile);
  }
  std::cerr << "generating workload (" << queries << " queries, 8 systems, jobs=" << jobs
            << ")...\n";
  const auto [train, test] = generate(config);
  const CorpusIndex corpus = index_corpus(train);
  Diagnostics label_diag;
  std::vector<Candidate> candidates = group_candidates(pooled_lines(train));
  label_candidates(candidates, train.key, label_diag);

  FeatureLayout layout;
  for (const RunFile& run : train.runs) layout.roster.push_back(run.run_id);
  layout.groups = {FeatureGroup::CONF, FeatureGroup::QSIM, FeatureGroup::PSIM, FeatureGroup::DPS,
                   FeatureGroup::OP,   FeatureGroup::REL};
  layout.relation_vocab = relation_vocabulary(candidates);

  std::vector<std::string> doc_ids;
  for (const auto& [doc_id, text] : train.corpus) doc_ids.push_back(doc_id);

  // TF-IDF vector table.
  {
    Diagnostics diag;
    DocVectorTable serial_table;
    DocVectorTable parallel_table;
    const double s = best_ms(
        repeats, [&] { serial_table = DocVectorTable::build(corpus, doc_ids, {}, 1, diag); });
    const double p = best_ms(
        repeats, [&] { parallel_table = DocVectorTable::build(corpus, doc_ids, {}, jobs, diag); });
    bool same = true;
    for (const std::string& id : doc_ids) {
      const TfidfVector* a = serial_table.find(id);
      const TfidfVector* b = parallel_table.find(id);
      same = same && a && b && a->weights == b->weights && a->norm == b->norm;
    }
    report("tfidf vectors", s, p, same);
  }

  // Feature matrix assembly.
  std::vector<FeatureVector> rows;
  {
    Diagnostics diag;
    FeaturizeOptions serial_opts;
    serial_opts.jobs = 1;
    FeaturizeOptions parallel_opts;
    parallel_opts.jobs = jobs;
    std::vector<FeatureVector> parallel_rows;
    const double s = best_ms(repeats, [&] {
      rows = featurize(candidates, layout, &train.queries, &corpus, serial_opts, diag);
    });
    const double p = best_ms(repeats, [&] {
      parallel_rows = featurize(candidates, layout, &train.queries, &corpus, parallel_opts, diag);
    });
    bool same = rows.size() == parallel_rows.size();
    for (std::size_t i = 0; same && i < rows.size(); ++i) {
      same = bit_equal(rows[i].values, parallel_rows[i].values);
    }
    report("featurize", s, p, same);
  }

  // Training (blocked objective and gradient reductions).
  LinearModel model;
  {
    TrainOptions serial_opts;
    serial_opts.jobs = 1;
    TrainOptions parallel_opts;
    parallel_opts.jobs = jobs;
    TrainResult serial_result;
    TrainResult parallel_result;
    const double s =
        best_ms(repeats, [&] { serial_result = slotfuse::train(rows, layout, serial_opts); });
    const double p =
        best_ms(repeats, [&] { parallel_result = slotfuse::train(rows, layout, parallel_opts); });
    const bool same = bit_equal(serial_result.model.weights, parallel_result.model.weights) &&
                      serial_result.model.bias == parallel_result.model.bias;
    report("train", s, p, same);
    model = serial_result.model;
  }

  // Prediction.
  {
    std::vector<Prediction> serial_preds;
    std::vector<Prediction> parallel_preds;
    const double s = best_ms(repeats, [&] { serial_preds = predict(model, rows, 0.5, 1); });
    const double p = best_ms(repeats, [&] { parallel_preds = predict(model, rows, 0.5, jobs); });
    bool same = serial_preds.size() == parallel_preds.size();
    for (std::size_t i = 0; same && i < serial_preds.size(); ++i) {
      same = serial_preds[i].probability == parallel_preds[i].probability &&
             serial_preds[i].accepted == parallel_preds[i].accepted;
    }
    report("predict", s, p, same);
  }
  return 0;
}
