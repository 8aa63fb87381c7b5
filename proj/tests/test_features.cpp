#include <doctest.h>

#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "slotfuse/features.hpp"

using namespace slotfuse;

namespace {

FeatureLayout layout_of(std::vector<std::string> roster, std::set<FeatureGroup> groups,
                        std::vector<std::string> vocab = {}) {
  FeatureLayout layout;
  layout.roster = std::move(roster);
  layout.groups = std::move(groups);
  layout.relation_vocab = std::move(vocab);
  return layout;
}

std::vector<std::string> ten_systems() {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("sys" + std::to_string(i));
  return ids;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("ten systems with confidence and document agreement make 11 columns") {
  const auto layout = layout_of(ten_systems(), {FeatureGroup::CONF, FeatureGroup::DPS});
  CHECK(layout.dimension() == 11);
}

TEST_CASE("adding offset agreement and the relation indicator makes 13 columns") {
  // The relation block is one indicator here because the vocabulary holds a
  // single slot; wider vocabularies expand it one column per slot.
  const auto layout =
      layout_of(ten_systems(), {FeatureGroup::CONF, FeatureGroup::DPS, FeatureGroup::OP,
                                FeatureGroup::REL},
                {"per:title"});
  CHECK(layout.dimension() == 13);

  const auto wider =
      layout_of(ten_systems(), {FeatureGroup::CONF, FeatureGroup::DPS, FeatureGroup::OP,
                                FeatureGroup::REL},
                {"per:age", "per:title", "per:spouse"});
  CHECK(wider.dimension() == 15);
}

TEST_CASE("every group enabled: per-system blocks, scalars, relation one-hot") {
  const auto layout = layout_of({"a", "b", "c"},
                                {FeatureGroup::CONF, FeatureGroup::QSIM, FeatureGroup::PSIM,
                                 FeatureGroup::DPS, FeatureGroup::OP, FeatureGroup::RELPROV,
                                 FeatureGroup::REL},
                                {"s1", "s2", "s3", "s4"});
  CHECK(layout.dimension() == 3 * 3 + 1 + 1 + 2 + 4);
}

TEST_CASE("column names follow the canonical group order") {
  const auto layout = layout_of({"a", "b"},
                                {FeatureGroup::CONF, FeatureGroup::QSIM, FeatureGroup::PSIM,
                                 FeatureGroup::DPS, FeatureGroup::OP, FeatureGroup::RELPROV,
                                 FeatureGroup::REL},
                                {"s1", "s2"});
  const std::vector<std::string> expected = {
      "conf:a", "conf:b", "qsim:a", "qsim:b", "psim:a", "psim:b",
      "dps",    "op",     "relprov_dps", "relprov_op", "rel:s1", "rel:s2"};
  CHECK(layout.column_names() == expected);
}

TEST_CASE("group names parse back to themselves") {
  for (FeatureGroup g : {FeatureGroup::CONF, FeatureGroup::QSIM, FeatureGroup::PSIM,
                         FeatureGroup::DPS, FeatureGroup::OP, FeatureGroup::REL,
                         FeatureGroup::RELPROV}) {
    CHECK(parse_feature_group(to_string(g)) == g);
  }
  CHECK(!parse_feature_group("bogus").has_value());
}

TEST_CASE("layout json round trip") {
  const auto layout = layout_of({"b", "a"}, {FeatureGroup::CONF, FeatureGroup::REL, FeatureGroup::OP},
                                {"per:age", "per:title"});
  const FeatureLayout back = FeatureLayout::from_json(layout.to_json());
  CHECK(back == layout);

  nlohmann::json bad = layout.to_json();
  bad["groups"].push_back("nonsense");
  CHECK_THROWS(FeatureLayout::from_json(bad));
}

TEST_CASE("relation vocabulary is the sorted distinct slot set") {
  std::vector<ResponseLine> lines;
  lines.push_back(testutil::line("Q2", "per:title", "s1", "x", 0.5, "d", 0, 3));
  lines.push_back(testutil::line("Q1", "per:age", "s1", "y", 0.5, "d", 0, 3));
  lines.push_back(testutil::line("Q3", "per:title", "s2", "z", 0.5, "d", 0, 3));
  const auto vocab = relation_vocabulary(group_candidates(lines));
  CHECK(vocab == std::vector<std::string>{"per:age", "per:title"});
}

TEST_CASE("label_candidates applies key judgments and defaults the rest to incorrect") {
  std::vector<ResponseLine> lines;
  lines.push_back(testutil::line("Q1", "per:title", "s1", "mayor", 0.9, "d", 0, 4));
  lines.push_back(testutil::line("Q1", "per:title", "s1", "governor", 0.8, "d", 0, 7));
  lines.push_back(testutil::line("Q1", "per:title", "s1", "unjudged", 0.7, "d", 0, 7));
  auto candidates = group_candidates(lines);

  std::vector<KeyEntry> key;
  key.push_back(testutil::entry("Q1", "per:title", "mayor", true));
  key.push_back(testutil::entry("Q1", "per:title", "governor", false));

  Diagnostics diag;
  label_candidates(candidates, key, diag);
  REQUIRE(candidates.size() == 3);
  CHECK(candidates[0].label == false);   // governor
  CHECK(candidates[1].label == true);    // mayor
  CHECK(candidates[2].label == false);   // unjudged
  CHECK(diag.unlabeled_candidates == 1);
  CHECK(diag.warning_count() == 1);
}

TEST_CASE("featurize places confidences and agreement scores in layout order") {
  CorpusIndex corpus;
  corpus.add_document("QD", "mayor election city");
  corpus.add_document("P1", "mayor city votes");
  corpus.add_document("P2", "weather sunny rain");
  corpus.add_document("P3", "council meeting agenda");

  std::vector<ResponseLine> lines;
  lines.push_back(testutil::line("Q1", "per:title", "s1", "Mayor", 0.9, "P1", 0, 4));
  lines.push_back(testutil::line("Q1", "per:title", "s2", "mayor", 0.6, "P1", 2, 6));
  lines.push_back(testutil::line("Q1", "per:title", "s3", "governor", 0.8, "P2", 0, 7));
  const auto candidates = group_candidates(lines);
  REQUIRE(candidates.size() == 2);
  REQUIRE(candidates[1].fill_norm == "mayor");

  std::vector<Query> queries(1);
  queries[0].id = "Q1";
  queries[0].doc_id = "QD";
  queries[0].entity_type = EntityType::PER;

  const auto layout = layout_of({"s1", "s2", "s3"},
                                {FeatureGroup::CONF, FeatureGroup::QSIM, FeatureGroup::PSIM,
                                 FeatureGroup::DPS, FeatureGroup::OP, FeatureGroup::RELPROV,
                                 FeatureGroup::REL},
                                {"per:title"});
  Diagnostics diag;
  const auto rows = featurize(candidates, layout, &queries, &corpus, {}, diag);
  REQUIRE(rows.size() == 2);
  const std::vector<double>& mayor = rows[1].values;
  REQUIRE(mayor.size() == layout.dimension());

  CHECK(mayor[0] == 0.9);  // conf:s1
  CHECK(mayor[1] == 0.6);  // conf:s2
  CHECK(mayor[2] == 0.0);  // conf:s3 did not produce this fill

  Diagnostics table_diag;
  const DocVectorTable table =
      DocVectorTable::build(corpus, {"QD", "P1", "P2", "P3"}, {}, 1, table_diag);
  CHECK(mayor[3] == doctest::Approx(table.similarity("QD", "P1")).epsilon(1e-12));
  CHECK(mayor[4] == doctest::Approx(table.similarity("QD", "P1")).epsilon(1e-12));
  CHECK(mayor[5] == 0.0);

  // Both producers cite the same document, so each sees cosine 1 with the
  // other; the absent system stays 0.
  CHECK(mayor[6] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mayor[7] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mayor[8] == 0.0);

  // Filler pool: P1 holds two of three responses; spans [0,4] and [2,6]
  // overlap by 3 of 7 positions and the group divisor is 2.
  CHECK(mayor[9] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));             // dps
  CHECK(mayor[10] == doctest::Approx(0.5 * (3.0 / 7.0)).epsilon(1e-9));    // op

  // Relation provenance widens both spans to [0,10] and [0,12].
  CHECK(mayor[11] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));            // relprov_dps
  CHECK(mayor[12] == doctest::Approx(0.5 * (11.0 / 13.0)).epsilon(1e-9));  // relprov_op

  CHECK(mayor[13] == 1.0);  // rel:per:title

  const std::vector<double>& governor = rows[0].values;
  CHECK(governor[2] == 0.8);
  CHECK(governor[9] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(governor[10] == 0.0);  // lone citer of P2
}

TEST_CASE("featurize output is identical for any job count") {
  CorpusIndex corpus;
  for (int d = 0; d < 6; ++d) {
    corpus.add_document("d" + std::to_string(d),
                        "w" + std::to_string(d) + " w" + std::to_string((d + 1) % 6) + " common");
  }
  std::vector<ResponseLine> lines;
  std::vector<Query> queries;
  for (int q = 0; q < 5; ++q) {
    const std::string qid = "Q" + std::to_string(q);
    Query query;
    query.id = qid;
    query.doc_id = "d" + std::to_string(q % 6);
    queries.push_back(query);
    for (int s = 0; s < 3; ++s) {
      lines.push_back(testutil::line(qid, "per:title", "s" + std::to_string(s),
                                     "fill" + std::to_string((q + s) % 4), 0.1 * (s + 1),
                                     "d" + std::to_string((q + s) % 6), 10 * s, 10 * s + 5));
    }
  }
  const auto candidates = group_candidates(lines);
  const auto layout = layout_of({"s0", "s1", "s2"},
                                {FeatureGroup::CONF, FeatureGroup::QSIM, FeatureGroup::PSIM,
                                 FeatureGroup::DPS, FeatureGroup::OP, FeatureGroup::RELPROV,
                                 FeatureGroup::REL},
                                relation_vocabulary(candidates));

  FeaturizeOptions serial;
  serial.jobs = 1;
  FeaturizeOptions parallel;
  parallel.jobs = 4;
  Diagnostics diag1, diag4;
  const auto rows1 = featurize(candidates, layout, &queries, &corpus, serial, diag1);
  const auto rows4 = featurize(candidates, layout, &queries, &corpus, parallel, diag4);
  REQUIRE(rows1.size() == rows4.size());
  for (std::size_t i = 0; i < rows1.size(); ++i) {
    CHECK(rows1[i].query_id == rows4[i].query_id);
    CHECK(bit_equal(rows1[i].values, rows4[i].values));
  }
}

TEST_CASE("strict relation handling errors on unseen slots, lenient zeroes them") {
  std::vector<ResponseLine> lines;
  lines.push_back(testutil::line("Q1", "per:age", "s1", "44", 0.9, "d", 0, 1));
  const auto candidates = group_candidates(lines);
  const auto layout =
      layout_of({"s1"}, {FeatureGroup::CONF, FeatureGroup::REL}, {"per:title"});

  Diagnostics diag;
  FeaturizeOptions strict;
  CHECK_THROWS(featurize(candidates, layout, nullptr, nullptr, strict, diag));

  FeaturizeOptions lenient;
  lenient.strict_relations = false;
  const auto rows = featurize(candidates, layout, nullptr, nullptr, lenient, diag);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].values[0] == 0.9);
  CHECK(rows[0].values[1] == 0.0);
  CHECK(diag.warning_count() == 1);
}

TEST_CASE("featurize rejects candidates from systems outside the roster") {
  std::vector<ResponseLine> lines;
  lines.push_back(testutil::line("Q1", "per:age", "intruder", "44", 0.9, "d", 0, 1));
  const auto candidates = group_candidates(lines);
  const auto layout = layout_of({"s1"}, {FeatureGroup::CONF});
  Diagnostics diag;
  CHECK_THROWS_WITH_AS(featurize(candidates, layout, nullptr, nullptr, {}, diag),
                       doctest::Contains("intruder"), std::invalid_argument);
}

TEST_CASE("similarity groups without a corpus are rejected") {
  const auto candidates = group_candidates({});
  Diagnostics diag;
  CHECK_THROWS(featurize(candidates, layout_of({"s1"}, {FeatureGroup::PSIM}), nullptr, nullptr, {},
                         diag));
  CHECK_THROWS(featurize(candidates, layout_of({"s1"}, {FeatureGroup::QSIM}), nullptr, nullptr, {},
                         diag));
}

TEST_CASE("feature matrix survives a write/read cycle") {
  const auto layout = layout_of({"s1", "s2"},
                                {FeatureGroup::CONF, FeatureGroup::DPS, FeatureGroup::OP,
                                 FeatureGroup::REL},
                                {"per:age", "per:title"});
  std::vector<FeatureVector> rows(2);
  rows[0].query_id = "Q1";
  rows[0].slot = "per:title";
  rows[0].fill_norm = "mayor of town";
  rows[0].values = {0.9, 0.123456789012345678, 2.0 / 3.0, 1.0 / 7.0, 0.0, 1.0};
  rows[0].label = true;
  rows[1].query_id = "Q2";
  rows[1].slot = "per:age";
  rows[1].fill_norm = "44";
  rows[1].values = {0.0, 0.25, 1.0 / 3.0, 0.0, 1.0, 0.0};
  // second row deliberately unlabeled

  const std::string text = write_feature_matrix(layout, rows);
  std::istringstream in(text);
  const auto [back_layout, back_rows] = read_feature_matrix(in, "matrix.tsv");
  CHECK(back_layout == layout);
  REQUIRE(back_rows.size() == 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back_rows[i].query_id == rows[i].query_id);
    CHECK(back_rows[i].slot == rows[i].slot);
    CHECK(back_rows[i].fill_norm == rows[i].fill_norm);
    CHECK(bit_equal(back_rows[i].values, rows[i].values));
    CHECK(back_rows[i].label == rows[i].label);
  }

  // A second write is byte-identical.
  CHECK(write_feature_matrix(back_layout, back_rows) == text);
}

TEST_CASE("matrix reader rejects non-canonical headers and bad cells") {
  std::istringstream wrong_order(
      "query_id\tslot\tfill\tdps\tconf:s1\nQ1\tper:age\t44\t0.5\t0.9\n");
  CHECK_THROWS(read_feature_matrix(wrong_order, "m.tsv"));

  std::istringstream bad_value("query_id\tslot\tfill\tdps\nQ1\tper:age\t44\tnope\n");
  CHECK_THROWS(read_feature_matrix(bad_value, "m.tsv"));

  std::istringstream bad_label("query_id\tslot\tfill\tdps\tlabel\nQ1\tper:age\t44\t0.5\t2\n");
  CHECK_THROWS(read_feature_matrix(bad_label, "m.tsv"));

  std::istringstream empty("");
  CHECK_THROWS(read_feature_matrix(empty, "m.tsv"));

  std::istringstream mismatched_rosters(
      "query_id\tslot\tfill\tconf:s1\tconf:s2\tqsim:s1\nQ1\tper:age\t44\t0.1\t0.2\t0.3\n");
  CHECK_THROWS(read_feature_matrix(mismatched_rosters, "m.tsv"));
}

}  // TEST_SUITE
