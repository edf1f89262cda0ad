#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "fq/artifact.hpp"
#include "fq/device.hpp"
#include "fq/privacy.hpp"
#include "fq/simrng.hpp"

using namespace fq;
using nlohmann::json;

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

LocalStore usage_store() {
  LocalStore s;
  s.add_dataset("usage", usage_schema(), usage_table());
  return s;
}

// Count-over-usage artifact; the baseline happy-path workload.
Artifact count_artifact() {
  Pipeline p = parse_pipeline_text(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [],
    "local_agg": {"kind": "count"},
    "final_agg": {"kind": "count"}
  })");
  Artifact a;
  a.pipeline_text = pipeline_to_text(p);
  a.declared = {"usage"};
  return a;
}

Message dispatch_msg(const std::string& task, const std::string& qid,
                     const std::string& artifact_hash_hex,
                     const std::string& params_json = "") {
  Message m;
  m.type = MsgType::Dispatch;
  m.query_id = qid;
  json p;
  p["artifact"] = artifact_hash_hex;
  p["task"] = task;
  if (!params_json.empty()) p["params"] = json::parse(params_json);
  m.payload = p.dump();
  return m;
}

Message artifact_data_msg(const std::string& hash, const std::string& bytes,
                          const std::string& qid) {
  Message m;
  m.type = MsgType::ArtifactData;
  m.query_id = qid;
  json p;
  p["bytes"] = bytes;
  p["hash"] = hash;
  m.payload = p.dump();
  return m;
}

Message cancel_msg(const std::string& task, const std::string& qid) {
  Message m;
  m.type = MsgType::Cancel;
  m.query_id = qid;
  json p;
  p["task"] = task;
  m.payload = p.dump();
  return m;
}

DeviceCore make_core(LocalStore* store, std::size_t cache_bytes = 20u * 1024u * 1024u) {
  DeviceConfig cfg;
  cfg.device_id = "dev-1";
  cfg.cache_bytes = cache_bytes;
  return DeviceCore(cfg, store, DeviceEnv{});
}

// Reference model for the artifact cache: a most-recently-used-first vector.
struct RefCache {
  std::size_t cap;
  std::vector<std::pair<std::string, std::string>> mru_first;

  std::size_t used() const {
    std::size_t u = 0;
    for (const auto& e : mru_first) u += e.second.size();
    return u;
  }
  const std::string* get(const std::string& h) {
    for (std::size_t i = 0; i < mru_first.size(); ++i) {
      if (mru_first[i].first == h) {
        auto e = mru_first[i];
        mru_first.erase(mru_first.begin() + static_cast<std::ptrdiff_t>(i));
        mru_first.insert(mru_first.begin(), e);
        return &mru_first.front().second;
      }
    }
    return nullptr;
  }
  bool put(const std::string& h, std::string bytes) {
    if (bytes.size() > cap) return false;
    for (std::size_t i = 0; i < mru_first.size(); ++i) {
      if (mru_first[i].first == h) {
        mru_first.erase(mru_first.begin() + static_cast<std::ptrdiff_t>(i));
        break;
      }
    }
    mru_first.insert(mru_first.begin(), {h, std::move(bytes)});
    while (used() > cap) mru_first.pop_back();
    return true;
  }
  std::vector<std::string> lru_first() const {
    std::vector<std::string> out;
    for (auto it = mru_first.rbegin(); it != mru_first.rend(); ++it) out.push_back(it->first);
    return out;
  }
};

}  // namespace

TEST_CASE("artifact cache agrees with a reference model over random operations") {
  Rng rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t cap = 40 + static_cast<std::size_t>(rng.uniform_int(0, 120));
    ArtifactCache cache(cap);
    RefCache ref{cap, {}};
    for (int op = 0; op < 120; ++op) {
      std::string h = "h" + std::to_string(rng.uniform_int(0, 9));
      int which = static_cast<int>(rng.uniform_int(0, 2));
      if (which == 0) {
        std::string bytes(static_cast<std::size_t>(rng.uniform_int(1, 70)), 'x');
        bool got = cache.put(h, bytes);
        bool want = ref.put(h, bytes);
        REQUIRE(got == want);
      } else if (which == 1) {
        const std::string* got = cache.get(h);
        const std::string* want = ref.get(h);
        REQUIRE((got == nullptr) == (want == nullptr));
        if (got) REQUIRE(*got == *want);
      } else {
        bool want = std::any_of(ref.mru_first.begin(), ref.mru_first.end(),
                                [&](const auto& e) { return e.first == h; });
        REQUIRE(cache.contains(h) == want);
      }
      REQUIRE(cache.size_bytes() == ref.used());
      REQUIRE(cache.count() == ref.mru_first.size());
      REQUIRE(cache.size_bytes() <= cap);
      REQUIRE(cache.hashes_lru_first() == ref.lru_first());
    }
  }
}

TEST_CASE("cache lookup refreshes recency and eviction removes the coldest entry") {
  ArtifactCache cache(30);
  REQUIRE(cache.put("a", std::string(10, 'a')));
  REQUIRE(cache.put("b", std::string(10, 'b')));
  REQUIRE(cache.put("c", std::string(10, 'c')));
  CHECK(cache.hashes_lru_first() == std::vector<std::string>{"a", "b", "c"});

  // A hit on "a" makes "b" the eviction victim.
  REQUIRE(cache.get("a") != nullptr);
  CHECK(cache.hashes_lru_first() == std::vector<std::string>{"b", "c", "a"});

  REQUIRE(cache.put("d", std::string(10, 'd')));
  CHECK(!cache.contains("b"));
  CHECK(cache.hashes_lru_first() == std::vector<std::string>{"c", "a", "d"});
  CHECK(cache.size_bytes() == 30);

  // contains() is a pure peek: order unchanged.
  CHECK(cache.contains("c"));
  CHECK(cache.hashes_lru_first() == std::vector<std::string>{"c", "a", "d"});
}

TEST_CASE("an entry larger than the whole budget is refused") {
  ArtifactCache cache(50);
  CHECK(!cache.put("big", std::string(51, 'x')));
  CHECK(cache.count() == 0);
  CHECK(cache.size_bytes() == 0);
  CHECK(cache.put("fits", std::string(50, 'y')));
  CHECK(cache.count() == 1);
}

TEST_CASE("register and heartbeat identify the device") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store, 1234);

  Message reg = core.make_register();
  CHECK(reg.type == MsgType::Register);
  json rp = json::parse(reg.payload);
  CHECK(rp.at("device") == "dev-1");
  CHECK(rp.at("cache_bytes") == 1234);

  Message hb = core.make_heartbeat();
  CHECK(hb.type == MsgType::Heartbeat);
  CHECK(json::parse(hb.payload).at("device") == "dev-1");
}

TEST_CASE("cold dispatch parks the task and requests the artifact by hash") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store);
  Artifact a = count_artifact();
  std::string bytes = artifact_to_text(a);
  std::string hash = artifact_hash(bytes);

  auto out = core.on_message(dispatch_msg("q1/dev-1", "q1", hash));
  REQUIRE(out.size() == 1);
  CHECK(out[0].type == MsgType::ArtifactRequest);
  CHECK(out[0].query_id == "q1");
  json rp = json::parse(out[0].payload);
  CHECK(rp.at("device") == "dev-1");
  CHECK(rp.at("hash") == hash);
  CHECK(!core.has_ready());
  CHECK(core.counters().dispatches == 1);
  CHECK(core.counters().artifact_requests == 1);

  SUBCASE("matching artifact data readies the task, caches it, and execution succeeds") {
    auto out2 = core.on_message(artifact_data_msg(hash, bytes, "q1"));
    CHECK(out2.empty());
    CHECK(core.cache().contains(hash));
    REQUIRE(core.has_ready());

    auto w = core.start_next();
    REQUIRE(w.has_value());
    CHECK(w->task_id == "q1/dev-1");
    CHECK(w->query_id == "q1");
    CHECK(w->artifact_text == bytes);
    CHECK(core.counters().executed == 1);

    ExecOutcome o = core.execute(*w);
    REQUIRE(o.kind == OutcomeKind::Partial);
    Partial part = partial_from_text(o.partial_text);
    CHECK(part.kind == AggKind::Count);
    CHECK(part.scalar.n == 6);

    Message res = core.make_result(*w, o, 42, 7);
    CHECK(res.type == MsgType::Result);
    CHECK(res.query_id == "q1");
    json pr = json::parse(res.payload);
    CHECK(pr.at("device") == "dev-1");
    CHECK(pr.at("task") == "q1/dev-1");
    CHECK(pr.at("exec_ms") == 42);
    CHECK(pr.at("blocking_ms") == 7);
    CHECK(pr.contains("partial"));
    CHECK(!pr.contains("error"));
    CHECK(!pr.contains("violation"));
  }

  SUBCASE("a later dispatch of the same artifact is served from the cache") {
    (void)core.on_message(artifact_data_msg(hash, bytes, "q1"));
    (void)core.start_next();
    auto out2 = core.on_message(dispatch_msg("q2/dev-1", "q2", hash));
    CHECK(out2.empty());  // no network round-trip
    CHECK(core.counters().cache_hits == 1);
    CHECK(core.counters().artifact_requests == 1);
    REQUIRE(core.has_ready());
    auto w2 = core.start_next();
    REQUIRE(w2.has_value());
    CHECK(w2->task_id == "q2/dev-1");
  }
}

TEST_CASE("a repeated task id is acknowledged but never executed twice") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store);
  Artifact a = count_artifact();
  std::string bytes = artifact_to_text(a);
  std::string hash = artifact_hash(bytes);

  (void)core.on_message(dispatch_msg("q1/dev-1", "q1", hash));
  (void)core.on_message(artifact_data_msg(hash, bytes, "q1"));
  REQUIRE(core.start_next().has_value());
  CHECK(core.counters().executed == 1);

  auto out = core.on_message(dispatch_msg("q1/dev-1", "q1", hash));
  REQUIRE(out.size() == 1);
  CHECK(out[0].type == MsgType::Ack);
  json ap = json::parse(out[0].payload);
  CHECK(ap.at("device") == "dev-1");
  CHECK(ap.at("task") == "q1/dev-1");
  CHECK(core.counters().duplicate_dispatches == 1);
  CHECK(!core.has_ready());
  CHECK(core.counters().executed == 1);
}

TEST_CASE("cancel before start settles the task without a result") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store);
  Artifact a = count_artifact();
  std::string bytes = artifact_to_text(a);
  std::string hash = artifact_hash(bytes);

  SUBCASE("queued task: canceled while waiting its turn") {
    (void)core.on_message(dispatch_msg("q1/dev-1", "q1", hash));
    (void)core.on_message(artifact_data_msg(hash, bytes, "q1"));
    REQUIRE(core.has_ready());

    auto out = core.on_message(cancel_msg("q1/dev-1", "q1"));
    REQUIRE(out.size() == 1);
    CHECK(out[0].type == MsgType::Ack);
    CHECK(json::parse(out[0].payload).at("task") == "q1/dev-1");

    CHECK(core.is_canceled("q1/dev-1"));
    CHECK(!core.has_ready());
    CHECK(!core.start_next().has_value());
    CHECK(core.counters().canceled_before_start == 1);
    CHECK(core.counters().executed == 0);
  }

  SUBCASE("parked task: canceled while the artifact is still in flight") {
    (void)core.on_message(dispatch_msg("q1/dev-1", "q1", hash));
    auto out = core.on_message(cancel_msg("q1/dev-1", "q1"));
    REQUIRE(out.size() == 1);
    CHECK(out[0].type == MsgType::Ack);

    // The artifact arriving afterwards must not resurrect the task.
    auto out2 = core.on_message(artifact_data_msg(hash, bytes, "q1"));
    CHECK(out2.empty());
    CHECK(!core.has_ready());
    CHECK(!core.start_next().has_value());
  }
}

TEST_CASE("corrupt artifact bytes earn one retry, then an error result") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store);
  Artifact a = count_artifact();
  std::string bytes = artifact_to_text(a);
  std::string hash = artifact_hash(bytes);
  std::string corrupt = bytes + " ";

  // Two tasks wait on the same artifact; the retry is shared.
  (void)core.on_message(dispatch_msg("q1/d", "q1", hash));
  (void)core.on_message(dispatch_msg("q2/d", "q2", hash));
  CHECK(core.counters().artifact_requests == 2);

  auto out = core.on_message(artifact_data_msg(hash, corrupt, "q1"));
  REQUIRE(out.size() == 1);  // a single shared re-request
  CHECK(out[0].type == MsgType::ArtifactRequest);
  CHECK(json::parse(out[0].payload).at("hash") == hash);
  CHECK(core.counters().artifact_requests == 3);
  CHECK(!core.has_ready());

  auto out2 = core.on_message(artifact_data_msg(hash, corrupt, "q1"));
  REQUIRE(out2.size() == 2);  // one error result per parked task
  for (const auto& m : out2) {
    CHECK(m.type == MsgType::Result);
    json p = json::parse(m.payload);
    CHECK(p.at("error").at("code") == "HASH_MISMATCH");
    CHECK(p.at("exec_ms") == 0);
    CHECK(p.at("blocking_ms") == 0);
  }
  CHECK(!core.cache().contains(hash));

  // The tasks are settled: a correct delivery afterwards readies nothing.
  auto out3 = core.on_message(artifact_data_msg(hash, bytes, "q1"));
  CHECK(out3.empty());
  CHECK(!core.has_ready());
}

TEST_CASE("an artifact larger than the cache budget still runs, uncached") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store, 64);  // tiny budget
  Artifact a = count_artifact();
  std::string bytes = artifact_to_text(a);
  REQUIRE(bytes.size() > 64);
  std::string hash = artifact_hash(bytes);

  (void)core.on_message(dispatch_msg("q1/dev-1", "q1", hash));
  auto out = core.on_message(artifact_data_msg(hash, bytes, "q1"));
  CHECK(out.empty());
  CHECK(!core.cache().contains(hash));
  CHECK(core.cache().count() == 0);
  REQUIRE(core.has_ready());
  auto w = core.start_next();
  REQUIRE(w.has_value());
  ExecOutcome o = core.execute(*w);
  CHECK(o.kind == OutcomeKind::Partial);

  // The next dispatch of the same artifact must fetch again.
  auto out2 = core.on_message(dispatch_msg("q2/dev-1", "q2", hash));
  REQUIRE(out2.size() == 1);
  CHECK(out2[0].type == MsgType::ArtifactRequest);
  CHECK(core.counters().cache_hits == 0);
}

TEST_CASE("execution reports an absent dataset as an error result") {
  LocalStore empty;
  DeviceCore core = make_core(&empty);
  Artifact a = count_artifact();
  TaskWork w;
  w.task_id = "q1/dev-1";
  w.query_id = "q1";
  w.artifact_text = artifact_to_text(a);

  ExecOutcome o = core.execute(w);
  REQUIRE(o.kind == OutcomeKind::Error);
  CHECK(o.error_code == "DATASET_ABSENT");
  CHECK(o.detail.find("usage") != std::string::npos);

  Message res = core.make_result(w, o, 0, 0);
  json p = json::parse(res.payload);
  CHECK(p.at("error").at("code") == "DATASET_ABSENT");
  CHECK(!p.contains("partial"));
}

TEST_CASE("execution aborts with a violation when a guarded call hits the blacklist") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store);

  // The call target is computed at runtime, so only the injected guard can
  // catch it; the artifact ships with "upper" blacklisted.
  Pipeline p = parse_pipeline_text(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [
      {"op": "map", "column": "shout",
       "expr": {"call": {"lit": "upper"}, "args": [{"col": "category"}], "as": "Str"}}
    ],
    "local_agg": {"kind": "count"},
    "final_agg": {"kind": "count"}
  })");
  Pipeline guarded = inject_runtime_checks(p, nullptr);
  Artifact a;
  a.pipeline_text = pipeline_to_text(guarded);
  a.declared = {"usage"};
  a.blacklist = {"upper"};

  TaskWork w;
  w.task_id = "q1/dev-1";
  w.query_id = "q1";
  w.artifact_text = artifact_to_text(a);

  ExecOutcome o = core.execute(w);
  REQUIRE(o.kind == OutcomeKind::Violation);
  CHECK(o.violation_code == 7);
  CHECK(o.detail.find("upper") != std::string::npos);

  Message res = core.make_result(w, o, 3, 1);
  json pr = json::parse(res.payload);
  CHECK(pr.at("violation").at("code") == 7);
  CHECK(!pr.contains("partial"));
  CHECK(!pr.contains("error"));
}

TEST_CASE("execution enforces the declared dataset list at runtime") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store);
  Artifact a = count_artifact();
  a.declared = {"telemetry"};  // artifact grants a different dataset

  TaskWork w;
  w.task_id = "q1/dev-1";
  w.query_id = "q1";
  w.artifact_text = artifact_to_text(a);

  ExecOutcome o = core.execute(w);
  REQUIRE(o.kind == OutcomeKind::Violation);
  CHECK(o.violation_code == 6);
  CHECK(o.detail.find("usage") != std::string::npos);
}

TEST_CASE("the store loads csv datasets with schema sidecars from a directory") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "fq_store_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "usage.csv");
    csv << "category,duration,value\n";
    csv << "news,120,4.0\n";
    csv << "games,30,1.5\n";
    csv << "\"quoted,name\",7,0.25\n";
  }
  {
    std::ofstream sj(dir / "usage.schema.json");
    sj << R"({"columns":[{"name":"category","type":"Str"},)"
       << R"({"name":"duration","type":"Int"},{"name":"value","type":"Float"}]})";
  }
  {
    std::ofstream noise(dir / "notes.txt");
    noise << "ignored\n";
  }

  LocalStore store;
  store.load_dir(dir.string());
  REQUIRE(store.has("usage"));
  const Table* t = store.table("usage");
  REQUIRE(t != nullptr);
  REQUIRE(t->rows.size() == 3);
  CHECK(t->rows[2][0].as_str() == "quoted,name");
  CHECK(t->rows[2][1].as_int() == 7);
  CHECK(t->rows[0][2].as_float() == doctest::Approx(4.0));

  // Missing sidecar is a hard error.
  fs::path dir2 = fs::temp_directory_path() / "fq_store_test2";
  fs::remove_all(dir2);
  fs::create_directories(dir2);
  { std::ofstream csv(dir2 / "orphan.csv"); csv << "a\n1\n"; }
  LocalStore bad;
  CHECK_THROWS_AS(bad.load_dir(dir2.string()), Error);

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("params ride the dispatch into execution") {
  LocalStore store = usage_store();
  DeviceCore core = make_core(&store);

  Pipeline p = parse_pipeline_text(R"({
    "source": {"kind": "literal", "name": "usage"},
    "stages": [
      {"op": "filter", "expr": {"cmp": ">", "args": [{"col": "duration"}, {"param": "min_d"}]}}
    ],
    "local_agg": {"kind": "count"},
    "final_agg": {"kind": "count"}
  })");
  Artifact a;
  a.pipeline_text = pipeline_to_text(p);
  a.declared = {"usage"};
  std::string bytes = artifact_to_text(a);
  std::string hash = artifact_hash(bytes);

  (void)core.on_message(dispatch_msg("q1/dev-1", "q1", hash, R"({"min_d": 100})"));
  (void)core.on_message(artifact_data_msg(hash, bytes, "q1"));
  auto w = core.start_next();
  REQUIRE(w.has_value());
  REQUIRE(w->params.count("min_d") == 1);
  ExecOutcome o = core.execute(*w);
  REQUIRE(o.kind == OutcomeKind::Partial);
  CHECK(partial_from_text(o.partial_text).scalar.n == 3);  // 120, 300, 250
}
