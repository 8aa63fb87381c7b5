#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "slotfuse/aggregator.hpp"

using namespace slotfuse;

namespace {

constexpr double kGrid = 1e-3;       // oracle discretization step
constexpr double kMatchTol = 2e-3;   // allowed gap between solver and oracle
constexpr double kKktTol = 1e-8;

// Independent oracle: exhaustive search over the discretized feasible set.
// Each x_i ranges over the 1e-3 grid in [0,1]; the budget becomes an integer
// unit cap and a knapsack-style DP minimizes the exact weighted objective.
std::vector<double> grid_dp_oracle(const AggregationProblem& problem) {
  const std::size_t m = problem.values.size();
  const int points = static_cast<int>(std::llround(1.0 / kGrid)) + 1;  // 0..1000
  const int budget_units =
      std::min((points - 1) * static_cast<int>(m),
               static_cast<int>(std::floor(problem.budget / kGrid + 1e-9)));

  // cost[v][u] = Σ_j w_vj (u*kGrid - c_vj)^2
  std::vector<std::vector<double>> cost(m, std::vector<double>(points, 0.0));
  for (std::size_t v = 0; v < m; ++v) {
    for (int u = 0; u < points; ++u) {
      const double x = u * kGrid;
      double c = 0.0;
      for (const ConfidenceObservation& obs : problem.observations[v]) {
        const double d = x - obs.confidence;
        c += obs.weight * d * d;
      }
      cost[v][u] = c;
    }
  }

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(budget_units + 1, kInf);
  std::vector<std::vector<int>> choice(m, std::vector<int>(budget_units + 1, -1));
  for (int b = 0; b <= budget_units; ++b) {
    const int top = std::min(b, points - 1);
    for (int u = 0; u <= top; ++u) {
      if (cost[0][u] < dp[b]) {
        dp[b] = cost[0][u];
        choice[0][b] = u;
      }
    }
  }
  std::vector<double> next(budget_units + 1);
  for (std::size_t v = 1; v < m; ++v) {
    std::fill(next.begin(), next.end(), kInf);
    for (int b = 0; b <= budget_units; ++b) {
      const int top = std::min(b, points - 1);
      for (int u = 0; u <= top; ++u) {
        const double total = dp[b - u] + cost[v][u];
        if (total < next[b]) {
          next[b] = total;
          choice[v][b] = u;
        }
      }
    }
    dp.swap(next);
  }

  // Walk the choices back from the full budget.
  std::vector<double> x(m, 0.0);
  int b = budget_units;
  for (std::size_t v = m; v-- > 0;) {
    const int u = choice[v][b];
    x[v] = u * kGrid;
    b -= u;
  }
  return x;
}

double objective_of(const AggregationProblem& problem, const std::vector<double>& x) {
  double total = 0.0;
  for (std::size_t v = 0; v < problem.values.size(); ++v) {
    for (const ConfidenceObservation& obs : problem.observations[v]) {
      const double d = x[v] - obs.confidence;
      total += obs.weight * d * d;
    }
  }
  return total;
}

// KKT residual check for the box-and-budget program. Returns the largest
// violation found so failures print a number.
double kkt_violation(const AggregationProblem& problem, const AggregatedOutput& out) {
  const std::size_t m = problem.values.size();
  double worst = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double wsum = 0.0, num = 0.0;
    for (const ConfidenceObservation& obs : problem.observations[i]) {
      wsum += obs.weight;
      num += obs.weight * obs.confidence;
    }
    const double mean = num / wsum;
    const double x = out.values[i].confidence;
    total += x;
    worst = std::max(worst, -x);         // x >= 0
    worst = std::max(worst, x - 1.0);    // x <= 1
    const double grad = 2.0 * wsum * (x - mean) + out.lambda_star;
    if (x <= 0.0) {
      worst = std::max(worst, -grad);    // at the lower bound: grad >= 0
    } else if (x >= 1.0) {
      worst = std::max(worst, grad);     // at the upper bound: grad <= 0
    } else {
      worst = std::max(worst, std::fabs(grad));
    }
  }
  worst = std::max(worst, total - problem.budget);      // primal feasibility
  worst = std::max(worst, -out.lambda_star);            // dual feasibility
  worst = std::max(worst, out.lambda_star * (problem.budget - total));  // slackness
  return worst;
}

AggregationProblem fixture_problem() {
  AggregationProblem problem;
  problem.query_id = "Q1";
  problem.slot = "per:children";
  problem.values = {"alice", "bob"};
  problem.observations = {
      {{"s1", 0.9, 1.0}, {"s2", 0.8, 1.0}},
      {{"s1", 0.9, 1.0}},
  };
  problem.budget = 1.0;
  return problem;
}

AggregationProblem random_problem(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> value_count(1, 4);
  std::uniform_int_distribution<int> obs_count(1, 3);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  // Very small weights inflate the oracle's discretization error beyond the
  // match tolerance, so the draw stays in a moderate range.
  std::uniform_real_distribution<double> weight(0.5, 2.5);
  std::uniform_real_distribution<double> budget(0.3, 1.6);

  AggregationProblem problem;
  problem.query_id = "Q";
  problem.slot = "per:children";
  const int m = value_count(rng);
  for (int i = 0; i < m; ++i) {
    problem.values.push_back("v" + std::to_string(i));
    std::vector<ConfidenceObservation> obs;
    const int k = obs_count(rng);
    for (int j = 0; j < k; ++j) {
      obs.push_back(ConfidenceObservation{"s" + std::to_string(j), conf(rng), weight(rng)});
    }
    problem.observations.push_back(std::move(obs));
  }
  problem.budget = budget(rng);
  return problem;
}

ResponseLine with_run(ResponseLine line, const std::string& run_id) {
  line.run_id = run_id;
  return line;
}

}  // namespace

TEST_SUITE("aggregator") {

TEST_CASE("budget fixture: competing fills settle at 0.6 and 0.4 with multiplier 1") {
  const AggregationProblem problem = fixture_problem();
  const AggregatedOutput out = solve_aggregation(problem);
  REQUIRE(out.values.size() == 2);
  CHECK(out.values[0].confidence == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(out.values[1].confidence == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(out.lambda_star == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(!out.values[0].clipped);
  CHECK(!out.values[1].clipped);
  CHECK(kkt_violation(problem, out) <= kKktTol);
}

TEST_CASE("a slack budget returns the weighted means untouched") {
  AggregationProblem problem;
  problem.values = {"a", "b"};
  problem.observations = {{{"s1", 0.3, 1.0}}, {{"s1", 0.4, 1.0}}};
  problem.budget = 1.0;
  const AggregatedOutput out = solve_aggregation(problem);
  CHECK(out.values[0].confidence == 0.3);
  CHECK(out.values[1].confidence == 0.4);
  CHECK(out.lambda_star == 0.0);
}

TEST_CASE("a single value under budget passes through exactly") {
  AggregationProblem problem;
  problem.values = {"only"};
  problem.observations = {{{"s1", 0.77, 2.0}, {"s2", 0.77, 1.0}}};
  problem.budget = 1.0;
  const AggregatedOutput out = solve_aggregation(problem);
  CHECK(out.values[0].confidence == doctest::Approx(0.77).epsilon(1e-12));
}

TEST_CASE("weighted means respect the observation weights") {
  AggregationProblem problem;
  problem.values = {"a"};
  problem.observations = {{{"s1", 1.0, 3.0}, {"s2", 0.0, 1.0}}};
  problem.budget = 1.0;
  const AggregatedOutput out = solve_aggregation(problem);
  CHECK(out.values[0].confidence == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("solver matches the grid oracle and satisfies KKT on random problems") {
  std::mt19937_64 rng(20260815);
  int bisected = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const AggregationProblem problem = random_problem(rng);
    const AggregatedOutput out = solve_aggregation(problem);
    if (out.lambda_star > 0.0) ++bisected;

    CAPTURE(trial);
    CHECK(kkt_violation(problem, out) <= kKktTol);

    const std::vector<double> oracle = grid_dp_oracle(problem);
    double oracle_sum = 0.0;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      oracle_sum += oracle[i];
      CAPTURE(i);
      CHECK(std::fabs(out.values[i].confidence - oracle[i]) <= kMatchTol);
    }
    CHECK(oracle_sum <= problem.budget + 1e-12);

    // Neither side beats the other by more than the discretization allows.
    std::vector<double> solver_x;
    for (const AggregatedValue& v : out.values) solver_x.push_back(v.confidence);
    CHECK(objective_of(problem, solver_x) <= objective_of(problem, oracle) + 1e-6);
  }
  // The budget range must actually exercise the bisection path.
  CHECK(bisected > 50);
}

TEST_CASE("tightening the budget never raises the total or lowers the multiplier") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    AggregationProblem problem = random_problem(rng);
    const AggregatedOutput wide = solve_aggregation(problem);
    AggregationProblem tight = problem;
    tight.budget = problem.budget / 2.0;
    const AggregatedOutput narrow = solve_aggregation(tight);

    double wide_sum = 0.0, narrow_sum = 0.0;
    for (const auto& v : wide.values) wide_sum += v.confidence;
    for (const auto& v : narrow.values) narrow_sum += v.confidence;
    CHECK(narrow_sum <= wide_sum + 1e-9);
    CHECK(narrow.lambda_star >= wide.lambda_star - 1e-9);
  }
}

TEST_CASE("uniform weights preserve the ranking of the means") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    AggregationProblem problem;
    problem.budget = 0.8;
    for (int i = 0; i < 4; ++i) {
      problem.values.push_back("v" + std::to_string(i));
      problem.observations.push_back({{"s1", conf(rng), 1.0}});
    }
    const AggregatedOutput out = solve_aggregation(problem);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (problem.observations[i][0].confidence > problem.observations[j][0].confidence) {
          CHECK(out.values[i].confidence >= out.values[j].confidence - 1e-12);
        }
      }
    }
  }
}

TEST_CASE("solver rejects malformed problems") {
  AggregationProblem empty;
  empty.budget = 1.0;
  CHECK_THROWS(solve_aggregation(empty));

  AggregationProblem bad_budget = fixture_problem();
  bad_budget.budget = 0.0;
  CHECK_THROWS(solve_aggregation(bad_budget));

  AggregationProblem misaligned = fixture_problem();
  misaligned.observations.pop_back();
  CHECK_THROWS(solve_aggregation(misaligned));

  AggregationProblem no_weight = fixture_problem();
  no_weight.observations[0] = {{"s1", 0.5, 0.0}};
  CHECK_THROWS(solve_aggregation(no_weight));

  AggregationProblem bad_conf = fixture_problem();
  bad_conf.observations[0] = {{"s1", 1.5, 1.0}};
  CHECK_THROWS(solve_aggregation(bad_conf));
}

TEST_CASE("budget table round trips through its tsv form") {
  BudgetTable table;
  table.slot_budget["per:children"] = 0.025;
  table.slot_budget["org:subsidiaries"] = 0.5;
  table.entity_budget["PER"] = 3.25;

  const std::string text = table.to_tsv();
  const BudgetTable back = BudgetTable::parse_tsv(text, "budgets.tsv");
  CHECK(back.slot_budget == table.slot_budget);
  CHECK(back.entity_budget == table.entity_budget);
  CHECK(back.to_tsv() == text);

  CHECK_THROWS(BudgetTable::parse_tsv("per:x\t0\n", "budgets.tsv"));
  CHECK_THROWS(BudgetTable::parse_tsv("per:x\tabc\n", "budgets.tsv"));
  CHECK_THROWS(BudgetTable::parse_tsv("just-one-column\n", "budgets.tsv"));
}

TEST_CASE("single-valued slots always budget one") {
  BudgetTable table;
  table.slot_budget["per:age"] = 0.4;  // ignored: the slot is single-valued
  const SlotRegistry& reg = SlotRegistry::builtin();
  CHECK(table.budget_for_slot("per:age", reg) == 1.0);
  CHECK(table.budget_for_slot("per:children", reg) == 1.0);  // unseen list slot
  table.slot_budget["per:children"] = 0.25;
  CHECK(table.budget_for_slot("per:children", reg) == 0.25);
}

TEST_CASE("budget estimate fixture: 10 queries, 20 correct, 80 pooled fills give 0.025") {
  std::vector<ResponseLine> responses;
  std::vector<KeyEntry> key;
  for (int q = 0; q < 10; ++q) {
    const std::string qid = "Q" + std::to_string(q);
    for (int f = 0; f < 8; ++f) {
      responses.push_back(testutil::line(qid, "per:children", "s1", "kid" + std::to_string(f),
                                         0.5, "d", 0, 3));
    }
    key.push_back(testutil::entry(qid, "per:children", "kid0", true));
    key.push_back(testutil::entry(qid, "per:children", "kid1", true));
  }

  Diagnostics diag;
  const BudgetTable table =
      estimate_budgets(responses, key, SlotRegistry::builtin(), {}, diag);
  REQUIRE(table.slot_budget.count("per:children") == 1);
  CHECK(table.slot_budget.at("per:children") == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(!diag.notes.empty());  // the per-entity alternative reading is recorded
}

TEST_CASE("budget estimation pins single-valued slots to one and skips silent slots") {
  std::vector<ResponseLine> responses;
  responses.push_back(testutil::line("Q1", "per:age", "s1", "44", 0.9, "d", 0, 1));
  responses.push_back(testutil::line("Q1", "per:age", "s1", "45", 0.8, "d", 0, 1));
  std::vector<KeyEntry> key;
  key.push_back(testutil::entry("Q1", "per:age", "44", true));

  Diagnostics diag;
  const BudgetTable table = estimate_budgets(responses, key, SlotRegistry::builtin(), {}, diag);
  CHECK(table.slot_budget.at("per:age") == 1.0);
  CHECK(table.slot_budget.count("per:children") == 0);
}

TEST_CASE("slots with no correct fills keep the default budget") {
  std::vector<ResponseLine> responses;
  responses.push_back(testutil::line("Q1", "per:children", "s1", "kid", 0.9, "d", 0, 1));
  std::vector<KeyEntry> key;
  key.push_back(testutil::entry("Q1", "per:children", "kid", false));

  Diagnostics diag;
  const BudgetTable table = estimate_budgets(responses, key, SlotRegistry::builtin(), {}, diag);
  CHECK(table.slot_budget.count("per:children") == 0);
}

TEST_CASE("inverse slots inherit the sibling ratio only when they lack data") {
  std::vector<ResponseLine> responses;
  std::vector<KeyEntry> key;
  for (int q = 0; q < 2; ++q) {
    const std::string qid = "Q" + std::to_string(q);
    for (int f = 0; f < 4; ++f) {
      responses.push_back(testutil::line(qid, "org:parents", "s1", "p" + std::to_string(f), 0.5,
                                         "d", 0, 3));
    }
    key.push_back(testutil::entry(qid, "org:parents", "p0", true));
  }

  Diagnostics diag;
  std::map<std::string, std::string> inverse = {{"org:subsidiaries", "org:parents"}};
  const BudgetTable table =
      estimate_budgets(responses, key, SlotRegistry::builtin(), inverse, diag);
  const double parents = table.slot_budget.at("org:parents");
  CHECK(parents == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
  CHECK(table.slot_budget.at("org:subsidiaries") == parents);

  // A sibling without data leaves no estimate; an empty name is an error.
  std::map<std::string, std::string> silent = {{"org:members", "org:subsidiaries"}};
  const BudgetTable none = estimate_budgets({}, {}, SlotRegistry::builtin(), silent, diag);
  CHECK(none.slot_budget.count("org:members") == 0);
  std::map<std::string, std::string> empty_name = {{"", "org:parents"}};
  CHECK_THROWS(estimate_budgets({}, {}, SlotRegistry::builtin(), empty_name, diag));
  std::map<std::string, std::string> unknown = {{"org:members", "org:not_a_slot"}};
  CHECK_THROWS(estimate_budgets({}, {}, SlotRegistry::builtin(), unknown, diag));
}

TEST_CASE("combining team runs averages shared fills and keeps the best provenance") {
  RunFile first;
  first.run_id = "acme_1";
  first.team_id = "acme";
  first.lines.push_back(testutil::line("Q1", "per:title", "acme_1", "mayor", 0.8, "dA", 0, 4));
  first.lines.push_back(testutil::line("Q1", "per:title", "acme_1", "governor", 0.5, "dB", 0, 7));
  RunFile second;
  second.run_id = "acme_2";
  second.team_id = "acme";
  second.lines.push_back(testutil::line("Q1", "per:title", "acme_2", "Mayor", 0.6, "dC", 9, 13));

  const RunFile combined = combine_team_runs({first, second});
  CHECK(combined.run_id == "acme");
  REQUIRE(combined.lines.size() == 2);
  const ResponseLine& governor = combined.lines[0];
  const ResponseLine& mayor = combined.lines[1];
  CHECK(mayor.filler == "mayor");
  CHECK(mayor.confidence == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(mayor.filler_provenance->doc_id == "dA");  // 0.8 beats 0.6
  CHECK(mayor.run_id == "acme");
  CHECK(governor.confidence == 0.5);
}

TEST_CASE("a NIL row survives only when no sibling run answered") {
  RunFile first;
  first.run_id = "acme_1";
  first.team_id = "acme";
  first.lines.push_back(testutil::nil_line("Q1", "per:age", "acme_1"));
  first.lines.push_back(testutil::nil_line("Q2", "per:age", "acme_1"));
  RunFile second;
  second.run_id = "acme_2";
  second.team_id = "acme";
  second.lines.push_back(testutil::line("Q1", "per:age", "acme_2", "44", 0.9, "d", 0, 1));

  const RunFile combined = combine_team_runs({first, second});
  REQUIRE(combined.lines.size() == 2);
  CHECK(combined.lines[0].query_id == "Q1");
  CHECK(!combined.lines[0].nil);
  CHECK(combined.lines[1].query_id == "Q2");
  CHECK(combined.lines[1].nil);
}

TEST_CASE("combining is idempotent and rejects mixed teams") {
  RunFile run;
  run.run_id = "acme_1";
  run.team_id = "acme";
  run.lines.push_back(testutil::line("Q1", "per:title", "acme_1", "mayor", 0.8, "d", 0, 4));
  run.lines.push_back(testutil::nil_line("Q2", "per:age", "acme_1"));

  const RunFile once = combine_team_runs({run});
  const RunFile twice = combine_team_runs({once});
  CHECK(once.run_id == twice.run_id);
  REQUIRE(once.lines.size() == twice.lines.size());
  for (std::size_t i = 0; i < once.lines.size(); ++i) CHECK(once.lines[i] == twice.lines[i]);

  RunFile other;
  other.run_id = "rival_1";
  other.team_id = "rival";
  CHECK_THROWS(combine_team_runs({run, other}));
  CHECK_THROWS(combine_team_runs({}));
}

TEST_CASE("duplicate fills within one run keep the best line before averaging") {
  RunFile run;
  run.run_id = "acme_1";
  run.team_id = "acme";
  run.lines.push_back(testutil::line("Q1", "per:title", "acme_1", "mayor", 0.3, "dA", 0, 4));
  run.lines.push_back(testutil::line("Q1", "per:title", "acme_1", "MAYOR", 0.9, "dB", 5, 9));

  const RunFile combined = combine_team_runs({run});
  REQUIRE(combined.lines.size() == 1);
  // One run contributes once: its best duplicate, not the mean of both.
  CHECK(combined.lines[0].confidence == 0.9);
  CHECK(combined.lines[0].filler_provenance->doc_id == "dB");
}

TEST_CASE("unsupervised ensemble passes a lone team through the solver unchanged") {
  RunFile team;
  team.run_id = "acme";
  team.team_id = "acme";
  team.lines.push_back(testutil::line("Q1", "per:children", "acme", "ann", 0.3, "d", 0, 2));
  team.lines.push_back(testutil::line("Q1", "per:children", "acme", "bob", 0.4, "d", 5, 7));
  team.lines.push_back(testutil::nil_line("Q2", "per:children", "acme"));

  Diagnostics diag;
  const RunFile out =
      build_unsupervised_ensemble({team}, BudgetTable{}, SlotRegistry::builtin(), 1, diag);
  CHECK(out.run_id == kUnsupEnsembleRunId);
  REQUIRE(out.lines.size() == 2);  // the NIL row does not reach the solver
  CHECK(out.lines[0].confidence == 0.3);
  CHECK(out.lines[1].confidence == 0.4);
  CHECK(out.lines[0].run_id == kUnsupEnsembleRunId);
}

TEST_CASE("unsupervised ensemble reproduces the budget fixture across teams") {
  RunFile a;
  a.run_id = "alpha";
  a.team_id = "alpha";
  a.lines.push_back(testutil::line("Q1", "per:children", "alpha", "alice", 0.9, "dA", 0, 4));
  a.lines.push_back(testutil::line("Q1", "per:children", "alpha", "bob", 0.9, "dA", 10, 12));
  RunFile b;
  b.run_id = "beta";
  b.team_id = "beta";
  b.lines.push_back(testutil::line("Q1", "per:children", "beta", "Alice", 0.8, "dB", 0, 4));

  Diagnostics diag;
  const RunFile out =
      build_unsupervised_ensemble({a, b}, BudgetTable{}, SlotRegistry::builtin(), 1, diag);
  REQUIRE(out.lines.size() == 2);
  CHECK(out.lines[0].filler == "alice");
  CHECK(out.lines[0].confidence == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(out.lines[1].confidence == doctest::Approx(0.4).epsilon(1e-9));
  // The provenance donor is the highest-confidence contributor.
  CHECK(out.lines[0].filler_provenance->doc_id == "dA");
}

TEST_CASE("unsupervised ensemble with no teams is empty and says so") {
  Diagnostics diag;
  const RunFile out =
      build_unsupervised_ensemble({}, BudgetTable{}, SlotRegistry::builtin(), 1, diag);
  CHECK(out.lines.empty());
  CHECK(!diag.notes.empty());
}

TEST_CASE("unsupervised ensemble output is identical for any job count") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> conf(0.05, 0.95);
  std::vector<RunFile> teams(3);
  for (int t = 0; t < 3; ++t) {
    teams[t].run_id = "team" + std::to_string(t);
    teams[t].team_id = teams[t].run_id;
    for (int q = 0; q < 12; ++q) {
      for (int f = 0; f < 3; ++f) {
        teams[t].lines.push_back(testutil::line("Q" + std::to_string(q), "per:children",
                                                teams[t].run_id, "kid" + std::to_string(f),
                                                conf(rng), "d", 3 * f, 3 * f + 2));
      }
    }
  }
  BudgetTable budgets;
  budgets.slot_budget["per:children"] = 0.9;

  Diagnostics d1, d4;
  const RunFile serial =
      build_unsupervised_ensemble(teams, budgets, SlotRegistry::builtin(), 1, d1);
  const RunFile threaded =
      build_unsupervised_ensemble(teams, budgets, SlotRegistry::builtin(), 4, d4);
  REQUIRE(serial.lines.size() == threaded.lines.size());
  for (std::size_t i = 0; i < serial.lines.size(); ++i) {
    CHECK(serial.lines[i] == threaded.lines[i]);
  }
}

}  // TEST_SUITE
