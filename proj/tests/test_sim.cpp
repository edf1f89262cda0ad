#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "fq/sim.hpp"

using namespace fq;
using nlohmann::json;

namespace {

// Small, fast fleet that completes easily: no sleepers, mild latencies.
CampaignConfig easy_campaign() {
  CampaignConfig cfg;
  cfg.fleet.devices = 30;
  cfg.fleet.net.median_ms = 20.0;
  cfg.fleet.exec.median_ms = 30.0;
  cfg.fleet.data.rows_per_device = 20;
  cfg.z = 10;
  cfg.queries = 4;
  cfg.seed = 7;
  cfg.gap_ms = 200;
  return cfg;
}

std::string error_code_of(const CampaignConfig& cfg) {
  try {
    (void)run_campaign(cfg);
  } catch (const Error& e) {
    return e.code;
  }
  return "";
}

}  // namespace

TEST_CASE("campaign reports are byte-stable for a fixed config and seed") {
  CampaignConfig cfg = easy_campaign();
  CampaignReport a = run_campaign(cfg);
  CampaignReport b = run_campaign(cfg);

  CHECK(a.per_query_csv == b.per_query_csv);
  CHECK(a.summary_text == b.summary_text);
  CHECK(a.histogram_csv == b.histogram_csv);
  CHECK(a.wire_bytes == b.wire_bytes);
  CHECK(fleet_digest(cfg.fleet, cfg.seed) == fleet_digest(cfg.fleet, cfg.seed));

  REQUIRE(a.per_query.size() == 4);
  CHECK(a.completed == 4);
  CHECK(a.completion_rate == doctest::Approx(1.0));
  for (const auto& q : a.per_query) {
    CHECK(q.status == "complete");
    CHECK(q.returned_ok == 10);
    CHECK(q.dispatched >= 10);
    CHECK(q.target == 10);
    CHECK(q.delay_ms > 0);
  }

  // The summary document is canonical JSON with the headline numbers.
  json s = json::parse(a.summary_text);
  CHECK(s.at("completed") == 4);
  CHECK(s.at("queries") == 4);
  CHECK(s.at("seed") == 7);
  CHECK(s.at("z") == 10);
  CHECK(s.at("policy") == "deck");
  CHECK(s.at("quantum_used") == a.quantum_used);

  // CSV headers are part of the stable format.
  CHECK(a.per_query_csv.rfind("idx,", 0) == 0);
  CHECK(a.histogram_csv.rfind("bin_start_ms,bin_end_ms,count", 0) == 0);
}

TEST_CASE("a different seed produces a different fleet and different traffic") {
  CampaignConfig cfg = easy_campaign();
  CampaignConfig other = cfg;
  other.seed = 8;
  CHECK(fleet_digest(cfg.fleet, cfg.seed) != fleet_digest(other.fleet, other.seed));
  CampaignReport a = run_campaign(cfg);
  CampaignReport b = run_campaign(other);
  CHECK(a.summary_text != b.summary_text);
}

TEST_CASE("campaign bookkeeping is internally consistent") {
  CampaignReport r = run_campaign(easy_campaign());
  std::int64_t dispatched = 0;
  for (const auto& q : r.per_query) dispatched += q.dispatched;
  CHECK(r.quantum_used == dispatched);  // every dispatch debits the budget
  CHECK(r.artifact_bytes > 0);
  CHECK(r.wire_bytes > r.artifact_bytes);
  // Identical manifests across the campaign reuse one static check.
  CHECK(r.static_checks == 1);
  CHECK(r.verdict_cache_hits == 3);
  CHECK(r.mean_delay_ms > 0.0);
  CHECK(r.p50_delay_ms <= r.p90_delay_ms);
  CHECK(r.p90_delay_ms <= r.p99_delay_ms);
}

TEST_CASE("nearest-rank percentiles match hand-computed ranks") {
  std::vector<Ms> xs = {40, 10, 30, 20};  // sorts to 10,20,30,40
  CHECK(percentile_nearest_rank(xs, 0.25) == 10);
  CHECK(percentile_nearest_rank(xs, 0.5) == 20);
  CHECK(percentile_nearest_rank(xs, 0.51) == 30);  // ceil(2.04) = 3rd
  CHECK(percentile_nearest_rank(xs, 0.9) == 40);   // ceil(3.6) = 4th
  CHECK(percentile_nearest_rank(xs, 1.0) == 40);
  CHECK(percentile_nearest_rank({7}, 0.99) == 7);
}

TEST_CASE("invalid campaign configs are refused with specific codes") {
  CampaignConfig cfg = easy_campaign();

  cfg.fleet.devices = 5;  // below the anonymity floor of 10
  CHECK(error_code_of(cfg) == "FleetTooSmall");

  cfg = easy_campaign();
  cfg.z = 5;  // target below the anonymity floor
  CHECK(error_code_of(cfg) == "BadConfig");

  cfg = easy_campaign();
  cfg.z = 40;  // target larger than the fleet
  CHECK(error_code_of(cfg) == "FleetTooSmall");

  cfg = easy_campaign();
  cfg.policy = Policy::Once;
  cfg.z = 28;
  cfg.once_redundancy = 0.25;  // 28 * 1.25 = 35 > 30 devices
  CHECK(error_code_of(cfg) == "PolicyInfeasible");

  cfg = easy_campaign();
  cfg.fleet.net.median_ms = 0.0;
  CHECK(error_code_of(cfg) == "BadConfig");

  cfg = easy_campaign();
  cfg.fleet.sleep.prob = 1.5;
  CHECK(error_code_of(cfg) == "BadConfig");

  cfg = easy_campaign();
  cfg.fleet.sleep.wake_min_ms = 500;
  cfg.fleet.sleep.wake_max_ms = 100;
  CHECK(error_code_of(cfg) == "BadConfig");
}

TEST_CASE("campaign config documents round-trip through json") {
  CampaignConfig cfg = easy_campaign();
  cfg.policy = Policy::Incre;
  cfg.incre_interval_ms = 500;
  cfg.fleet.sleep.prob = 0.08;
  cfg.fleet.churn.enabled = true;
  cfg.fleet.data.fl_dim = 3;
  cfg.fleet.data.noniid = true;
  cfg.fl_rounds = 7;
  cfg.fl_lr = 0.05;
  cfg.fl_epochs = 2;

  std::string text = campaign_to_json_text(cfg);
  CampaignConfig back = campaign_from_json_text(text);
  CHECK(campaign_to_json_text(back) == text);

  // Missing keys keep their defaults.
  CampaignConfig dflt = campaign_from_json_text("{}");
  CHECK(campaign_to_json_text(dflt) == campaign_to_json_text(CampaignConfig{}));
  CHECK(dflt.z == 50);
  CHECK(dflt.fleet.devices == 100);

  CHECK_THROWS_AS(campaign_from_json_text("[]"), Error);
  CHECK_THROWS_AS(campaign_from_json_text("not json"), Error);
}

TEST_CASE("the response-shape dial grows with sleeper probability") {
  FleetConfig calm;
  calm.devices = 50;
  calm.net.median_ms = 40.0;
  calm.exec.median_ms = 120.0;

  FleetConfig dozy = calm;
  dozy.sleep.prob = 0.3;
  dozy.sleep.wake_min_ms = 30000;
  dozy.sleep.wake_max_ms = 60000;

  double a = response_shape(calm, 5, 2000);
  double b = response_shape(dozy, 5, 2000);
  CHECK(a > 1.0);  // p99 always exceeds the mean for lognormal-ish times
  CHECK(b > a * 2.0);
  // Deterministic for a fixed seed.
  CHECK(response_shape(calm, 5, 2000) == doctest::Approx(a));
}

TEST_CASE("model-training campaigns reduce the pooled loss deterministically") {
  CampaignConfig cfg;
  cfg.fleet.devices = 20;
  cfg.fleet.net.median_ms = 20.0;
  cfg.fleet.exec.median_ms = 30.0;
  cfg.fleet.data.fl_dim = 2;
  cfg.fleet.data.fl_rows_per_device = 16;
  cfg.z = 10;
  cfg.seed = 3;
  cfg.fl_rounds = 5;
  cfg.fl_lr = 0.1;
  cfg.fl_epochs = 1;

  FlReport a = run_fl_campaign(cfg);
  FlReport b = run_fl_campaign(cfg);
  CHECK(a.csv == b.csv);
  REQUIRE(a.rounds.size() == 5);
  REQUIRE(a.model.size() == 2);
  CHECK(a.initial_loss > 0.0);
  CHECK(a.rounds.back().loss < a.initial_loss);
  // Loss history is recorded per round, in order.
  for (int i = 0; i < 5; ++i) CHECK(a.rounds[i].round == i + 1);
  CHECK(a.total_ms > 0);
  CHECK(a.artifact_bytes > 0);
  CHECK(a.csv.rfind("round,loss,clock_ms,delay_ms,redundancy", 0) == 0);

  // Shifted per-device feature means change the fleet data.
  CampaignConfig shifted = cfg;
  shifted.fleet.data.noniid = true;
  CHECK(fleet_digest(cfg.fleet, cfg.seed) != fleet_digest(shifted.fleet, shifted.seed));
  FlReport c = run_fl_campaign(shifted);
  CHECK(c.csv != a.csv);
}

TEST_CASE("fleet digests cover device profiles and dataset contents") {
  FleetConfig f;
  f.devices = 12;
  std::string base = fleet_digest(f, 1);

  FleetConfig more_rows = f;
  more_rows.data.rows_per_device = f.data.rows_per_device + 1;
  CHECK(fleet_digest(more_rows, 1) != base);

  FleetConfig other_seed = f;
  CHECK(fleet_digest(other_seed, 2) != base);

  FleetConfig slower = f;
  slower.exec.median_ms *= 2.0;
  CHECK(fleet_digest(slower, 1) != base);
}
