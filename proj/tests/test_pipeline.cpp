#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "fq/pipeline.hpp"
#include "fq/simrng.hpp"

using namespace fq;

namespace {

Schema usage_schema() {
  return Schema{{{"category", Type::Str}, {"duration", Type::Int}, {"value", Type::Float}}};
}

Table usage_table() {
  Table t;
  t.schema = usage_schema();
  auto row = [&](const char* c, std::int64_t d, double v) {
    t.rows.push_back({Value(std::string(c)), Value(d), Value(v)});
  };
  row("news", 120, 4.0);
  row("games", 30, 1.5);
  row("news", 300, 10.0);
  row("mail", 90, 2.0);
  row("games", 250, 6.5);
  row("news", 80, 3.0);
  return t;
}

Pipeline parse_p(const std::string& text) { return parse_pipeline_text(text); }

}  // namespace

TEST_CASE("filter + map + sum computes the hand-checked total") {
  // rows with duration > 100: (news,120,4.0), (news,300,10.0), (games,250,6.5)
  // doubled values: 8 + 20 + 13 = 41
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [
      {"op": "filter", "expr": {"cmp": ">", "args": [{"col": "duration"}, {"lit": 100}]}},
      {"op": "map", "column": "v2",
       "expr": {"arith": "*", "args": [{"col": "value"}, {"lit": 2.0}]}}
    ],
    "local_agg": {"kind": "sum", "target": {"col": "v2"}}
  })");
  Table t = usage_table();
  ParamMap params;
  Partial r = execute_local(p, t, params, nullptr, nullptr, nullptr);
  CHECK(r.kind == AggKind::Sum);
  CHECK(!r.scalar.int_domain);
  CHECK(r.scalar.n == 3);
  CHECK(r.scalar.f_acc == doctest::Approx(41.0));
}

TEST_CASE("int-domain sum stays exact integer arithmetic") {
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [],
    "local_agg": {"kind": "sum", "target": {"col": "duration"}}
  })");
  Table t = usage_table();
  ParamMap params;
  Partial r = execute_local(p, t, params, nullptr, nullptr, nullptr);
  CHECK(r.scalar.int_domain);
  CHECK(r.scalar.i_acc == 120 + 30 + 300 + 90 + 250 + 80);
}

TEST_CASE("project narrows the schema; count counts surviving rows") {
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [
      {"op": "filter", "expr": {"cmp": "==", "args": [{"col": "category"}, {"lit": "news"}]}},
      {"op": "project", "columns": ["duration"]}
    ],
    "local_agg": {"kind": "count"}
  })");
  Table t = usage_table();
  ParamMap params;
  Partial r = execute_local(p, t, params, nullptr, nullptr, nullptr);
  CHECK(r.scalar.n == 3);
  // After the project, value/category are gone: referencing them must fail
  // statically.
  Pipeline bad = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [{"op": "project", "columns": ["duration"]}],
    "local_agg": {"kind": "sum", "target": {"col": "value"}}
  })");
  CHECK_THROWS_AS(validate_pipeline(bad, t.schema, params), Error);
}

TEST_CASE("groupby with mean inner matches hand computation") {
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [],
    "local_agg": {"kind": "groupby", "key": {"col": "category"},
                  "inner": {"kind": "mean", "target": {"col": "value"}}}
  })");
  Table t = usage_table();
  ParamMap params;
  Partial r = execute_local(p, t, params, nullptr, nullptr, nullptr);
  REQUIRE(r.groups.size() == 3);
  // news: (4 + 10 + 3)/3, games: (1.5 + 6.5)/2, mail: 2/1
  CHECK(r.groups.at("news").n == 3);
  CHECK(r.groups.at("news").f_acc == doctest::Approx(17.0));
  CHECK(r.groups.at("games").n == 2);
  CHECK(r.groups.at("games").f_acc == doctest::Approx(8.0));
  CHECK(r.groups.at("mail").n == 1);
  std::string text = finalize_text(r);
  CHECK(text.find("\"news\"") != std::string::npos);
}

TEST_CASE("group cardinality cap aborts execution") {
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [],
    "local_agg": {"kind": "groupby", "key": {"col": "category"},
                  "inner": {"kind": "count"}}
  })");
  Table t;
  t.schema = usage_schema();
  for (int i = 0; i < 10; i++)
    t.rows.push_back({Value("k" + std::to_string(i)), Value(std::int64_t{1}), Value(0.5)});
  ParamMap params;
  ExecLimits limits;
  limits.groupby_cap = 4;
  try {
    execute_local(p, t, params, nullptr, nullptr, nullptr, limits);
    FAIL("cap not enforced");
  } catch (const Error& e) {
    CHECK(e.code == "GroupCardinality");
  }
}

TEST_CASE("params bind at dispatch time") {
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [
      {"op": "filter", "expr": {"cmp": ">=", "args": [{"col": "duration"}, {"param": "min_d"}]}}
    ],
    "local_agg": {"kind": "count"}
  })");
  Table t = usage_table();
  ParamMap p1{{"min_d", Value(std::int64_t{100})}};
  ParamMap p2{{"min_d", Value(std::int64_t{300})}};
  CHECK(execute_local(p, t, p1, nullptr, nullptr, nullptr).scalar.n == 3);
  CHECK(execute_local(p, t, p2, nullptr, nullptr, nullptr).scalar.n == 1);
  ParamMap missing;
  CHECK_THROWS_AS(validate_pipeline(p, t.schema, missing), Error);
}

TEST_CASE("min/max carry typed extremes") {
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [],
    "local_agg": {"kind": "min", "target": {"col": "duration"}}
  })");
  Table t = usage_table();
  ParamMap params;
  Partial r = execute_local(p, t, params, nullptr, nullptr, nullptr);
  CHECK(r.scalar.has_extreme);
  CHECK(r.scalar.extreme == Value(std::int64_t{30}));
  // empty table -> no extreme, finalizes to null
  Table empty;
  empty.schema = usage_schema();
  Partial e = execute_local(p, empty, params, nullptr, nullptr, nullptr);
  CHECK(!e.scalar.has_extreme);
  CHECK(finalize_text(e) == "null");
}

TEST_CASE("resolve_source_name handles literal and computed references") {
  Pipeline lit = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [], "local_agg": {"kind": "count"}
  })");
  ParamMap params;
  CHECK(resolve_source_name(lit, params, nullptr, nullptr) == "usage");

  Pipeline comp = parse_p(R"({
    "source": {"kind": "computed",
               "name_expr": {"call": "lower", "args": [{"lit": "USAGE"}]}},
    "stages": [], "local_agg": {"kind": "count"}
  })");
  CHECK(resolve_source_name(comp, params, nullptr, nullptr) == "usage");

  // A guarded computed source consults the inspector with the resolved name.
  struct Recorder : RuntimeInspector {
    std::vector<std::string> datasets;
    void check_dataset(const std::string& n) override { datasets.push_back(n); }
  };
  Pipeline guarded = comp.clone();
  guarded.source.guarded = true;
  Recorder rec;
  CHECK(resolve_source_name(guarded, params, nullptr, &rec) == "usage");
  REQUIRE(rec.datasets.size() == 1);
  CHECK(rec.datasets[0] == "usage");
}

TEST_CASE("validation rejects malformed pipelines with stable codes") {
  ParamMap params;
  Schema sc = usage_schema();
  auto reject = [&](const std::string& text) {
    CHECK_THROWS_AS(parse_pipeline_text(text), Error);
  };
  reject("{}");
  reject(R"({"source": {"kind": "literal"}, "stages": [], "local_agg": {"kind": "count"}})");
  reject(R"({"source": {"kind": "literal", "name": "u"}, "stages": [{"op": "nope"}],
            "local_agg": {"kind": "count"}})");
  reject(R"({"source": {"kind": "literal", "name": "u"}, "stages": [],
            "local_agg": {"kind": "sum"}})");
  reject(R"({"source": {"kind": "literal", "name": "u"}, "stages": [],
            "local_agg": {"kind": "fedavg"}})");

  // non-bool filter caught statically
  Pipeline nb = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [{"op": "filter", "expr": {"col": "duration"}}],
    "local_agg": {"kind": "count"}
  })");
  CHECK_THROWS_AS(validate_pipeline(nb, sc, params), Error);
}

TEST_CASE("serialization is canonical and round-trip stable") {
  const char* docs[] = {
      R"({"source": {"kind": "literal", "name": "usage"},
          "stages": [
            {"op": "filter", "expr": {"cmp": ">", "args": [{"col": "duration"}, {"lit": 5}]}},
            {"op": "project", "columns": ["duration", "value"]},
            {"op": "map", "column": "z",
             "expr": {"arith": "+", "args": [{"col": "value"}, {"lit": 1.0}]}}
          ],
          "local_agg": {"kind": "mean", "target": {"col": "z"}},
          "final_agg": {"kind": "mean"}})",
      R"({"source": {"kind": "computed", "name_expr": {"lit": "usage"}},
          "stages": [],
          "local_agg": {"kind": "groupby", "key": {"col": "category"},
                        "inner": {"kind": "sum", "target": {"col": "value"}}}})",
      R"({"source": {"kind": "literal", "name": "fl_train"},
          "stages": [],
          "local_agg": {"kind": "fedavg", "dim": 3},
          "final_agg": {"kind": "fedavg"}})",
  };
  for (const char* d : docs) {
    Pipeline p1 = parse_pipeline_text(d);
    std::string s1 = pipeline_to_text(p1);
    Pipeline p2 = parse_pipeline_text(s1);
    std::string s2 = pipeline_to_text(p2);
    CHECK(s1 == s2);
    // clone preserves every field that serializes
    CHECK(pipeline_to_text(p1.clone()) == s1);
  }
}

TEST_CASE("randomized sum/count agree with a linear-scan oracle") {
  Rng rng(424242);
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [
      {"op": "filter", "expr": {"cmp": ">=", "args": [{"col": "value"}, {"param": "cut"}]}}
    ],
    "local_agg": {"kind": "sum", "target": {"col": "duration"}}
  })");
  for (int trial = 0; trial < 200; trial++) {
    Table t;
    t.schema = usage_schema();
    int n = static_cast<int>(rng.below(50));
    for (int i = 0; i < n; i++) {
      t.rows.push_back({Value("c" + std::to_string(rng.below(4))),
                        Value(rng.uniform_int(0, 1000)), Value(rng.uniform(0.0, 100.0))});
    }
    double cut = rng.uniform(0.0, 100.0);
    ParamMap params{{"cut", Value(cut)}};

    std::int64_t want_sum = 0;
    std::int64_t want_n = 0;
    for (auto& row : t.rows) {
      if (row[2].as_float() >= cut) {
        want_sum += row[1].as_int();
        want_n++;
      }
    }
    Partial r = execute_local(p, t, params, nullptr, nullptr, nullptr);
    CHECK(r.scalar.i_acc == want_sum);
    CHECK(r.scalar.n == want_n);
  }
}

TEST_CASE("fedavg local training matches an independent gradient-descent oracle") {
  // dim=2 plus y, 4 rows, lr=0.2, 3 epochs.
  Schema sc{{{"x0", Type::Float}, {"x1", Type::Float}, {"y", Type::Float}}};
  Table t;
  t.schema = sc;
  double xs[4][3] = {{1.0, 0.0, 2.0}, {0.0, 1.0, -1.0}, {1.0, 1.0, 1.5}, {2.0, -1.0, 3.0}};
  for (auto& r : xs) t.rows.push_back({Value(r[0]), Value(r[1]), Value(r[2])});

  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "fl_train"},
    "stages": [],
    "local_agg": {"kind": "fedavg", "dim": 2},
    "final_agg": {"kind": "fedavg"}
  })");
  FlParams fl;
  fl.model = {0.5, -0.5};
  fl.lr = 0.2;
  fl.epochs = 3;
  ParamMap params;
  Partial got = execute_local(p, t, params, &fl, nullptr, nullptr);

  // Oracle: the same math written independently over plain arrays.
  double w[2] = {0.5, -0.5};
  for (int e = 0; e < 3; e++) {
    double g[2] = {0, 0};
    for (auto& r : xs) {
      double err = r[0] * w[0] + r[1] * w[1] - r[2];
      g[0] += err * r[0];
      g[1] += err * r[1];
    }
    w[0] -= 0.2 * g[0] / 4.0;
    w[1] -= 0.2 * g[1] / 4.0;
  }
  CHECK(got.wsum == doctest::Approx(4.0));
  CHECK(got.wmodel[0] == doctest::Approx(4.0 * w[0]).epsilon(1e-12));
  CHECK(got.wmodel[1] == doctest::Approx(4.0 * w[1]).epsilon(1e-12));

  // Empty local set contributes identity (zero weight).
  Table empty;
  empty.schema = sc;
  Partial z = execute_local(p, empty, params, &fl, nullptr, nullptr);
  CHECK(z.wsum == 0.0);
}

TEST_CASE("fl_params_from reads dispatch params with defaults") {
  ParamMap params{{"fl_model", Value(std::string("[0.25,-1.5,3]"))},
                  {"fl_lr", Value(0.05)},
                  {"fl_epochs", Value(std::int64_t{4})}};
  FlParams fl = fl_params_from(params, 3);
  REQUIRE(fl.model.size() == 3);
  CHECK(fl.model[0] == 0.25);
  CHECK(fl.model[1] == -1.5);
  CHECK(fl.model[2] == 3.0);
  CHECK(fl.lr == 0.05);
  CHECK(fl.epochs == 4);

  ParamMap none;
  FlParams d = fl_params_from(none, 2);
  CHECK(d.model == std::vector<double>{0.0, 0.0});
  CHECK(d.lr == 0.1);
  CHECK(d.epochs == 1);

  ParamMap bad{{"fl_model", Value(std::string("not json"))}};
  CHECK_THROWS_AS(fl_params_from(bad, 2), Error);
}

TEST_CASE("map overwriting an existing column changes its type in the output schema") {
  Pipeline p = parse_p(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [{"op": "map", "column": "duration",
                "expr": {"arith": "/", "args": [{"col": "duration"}, {"lit": 1000}]}}],
    "local_agg": {"kind": "sum", "target": {"col": "duration"}}
  })");
  ParamMap params;
  Schema out = validate_pipeline(p, usage_schema(), params);
  int i = out.index_of("duration");
  REQUIRE(i >= 0);
  CHECK(out.columns[static_cast<size_t>(i)].type == Type::Float);
  Table t = usage_table();
  Partial r = execute_local(p, t, params, nullptr, nullptr, nullptr);
  CHECK(!r.scalar.int_domain);
  CHECK(r.scalar.f_acc == doctest::Approx(0.870));
}
