#pragma once
// Discrete-event fleet simulator.
//
// Builds a synthetic device population with heterogeneous network/compute
// profiles, wires every device's real DeviceCore to the real Coordinator
// through a virtual-time transport, and drives query campaigns on a single
// thread. All randomness flows through seeded portable streams, so a campaign
// with the same config and seed reproduces its reports byte for byte.
//
// Framing is short-circuited: messages move as structs, while the frame
// encoder still runs on every hop so traffic accounting matches what the TCP
// transport would have carried.

#include <cstdint>
#include <string>
#include <vector>

#include "fq/coord.hpp"
#include "fq/sched.hpp"

namespace fq {

// Per-message network latency: lognormal around a device-scaled median, with
// an optional day-cycle swing applied to the median.
struct NetModel {
  double median_ms = 60.0;
  double sigma = 0.5;          // lognormal shape
  double device_spread = 1.5;  // per-device median factor, log-uniform in [1/s, s]
  bool diurnal = false;
  double diurnal_low = 0.6;   // median scale at the trough of the day cycle
  double diurnal_high = 1.8;  // median scale at the peak
};

// Per-task on-device compute time; device_spread models slow vs fast hardware.
struct ExecModel {
  double median_ms = 200.0;
  double sigma = 0.6;
  double device_spread = 2.0;
};

// Chance that a task lands on a dozing device, which only starts work after a
// uniform wake delay. This is the heavy upper tail of response times.
struct SleepModel {
  double prob = 0.0;
  Ms wake_min_ms = 30000;
  Ms wake_max_ms = 300000;
};

// Optional connect/disconnect process (exponential up/down periods).
struct ChurnModel {
  bool enabled = false;
  double mean_up_ms = 600000.0;
  double mean_down_ms = 60000.0;
};

// What each device holds locally: a synthetic analytics table, and optionally
// a feature/label table for model training (columns x0..x{dim-1}, y).
// `noniid` shifts each device's feature means so label distributions differ
// across the fleet.
struct DataModel {
  std::string name = "usage_log";
  int rows_per_device = 40;
  std::string fl_name = "fl_train";
  int fl_dim = 0;  // 0 = no training table
  int fl_rows_per_device = 32;
  bool noniid = false;
};

struct FleetConfig {
  int devices = 100;
  NetModel net;
  ExecModel exec;
  SleepModel sleep;
  ChurnModel churn;
  DataModel data;
};

struct CampaignConfig {
  FleetConfig fleet;
  int z = 50;
  Policy policy = Policy::Deck;
  double once_redundancy = 0.1;
  double eta = 50.0;
  int k_max = 0;  // 0 = the query's target
  int queries = 10;
  std::uint64_t seed = 1;
  Ms timeout_ms = 100000;
  Ms wakeup_interval_ms = 100;
  Ms incre_interval_ms = 0;  // 0 = wakeup interval
  Ms fl_wakeup_interval_ms = 1000;
  Ms gap_ms = 1000;  // idle gap between consecutive queries
  // Sparse liveness traffic by default: fleets here do not churn unless asked
  // to, so heartbeats only need to keep the freshness window open.
  Ms heartbeat_interval_ms = 3600000;
  int min_devices = 10;
  std::string manifest_text;  // "" = a count query over the fleet dataset
  int fl_rounds = 0;          // run_fl_campaign only
  double fl_lr = 0.1;
  int fl_epochs = 1;
};

// Parses a campaign config document; missing keys keep their defaults.
CampaignConfig campaign_from_json_text(const std::string& text);
std::string campaign_to_json_text(const CampaignConfig& cfg);

// The default analytics manifest for a fleet's dataset (a filtered count).
std::string default_manifest_text(const DataModel& data, int z);

struct QueryStat {
  int idx = 0;
  std::string id;
  std::string status;
  Ms delay_ms = 0;
  int dispatched = 0;
  int target = 0;
  int returned_ok = 0;
  int violations = 0;
  int errors = 0;
  int starved_rounds = 0;
  double redundancy = 0.0;
  double net_ms_mean = 0.0;
  double exec_ms_mean = 0.0;
  double blocking_ms_mean = 0.0;
};

struct CampaignReport {
  std::vector<QueryStat> per_query;
  int completed = 0;
  double completion_rate = 0.0;
  double mean_delay_ms = 0.0;
  Ms p50_delay_ms = 0;
  Ms p90_delay_ms = 0;
  Ms p99_delay_ms = 0;
  double mean_redundancy = 0.0;
  int starved_rounds = 0;
  std::int64_t artifact_bytes = 0;
  std::int64_t wire_bytes = 0;  // framed size of every message on every hop
  std::int64_t quantum_used = 0;
  int static_checks = 0;
  int verdict_cache_hits = 0;
  // Rendered report files (byte-stable for a given config and seed).
  std::string per_query_csv;
  std::string summary_text;    // canonical JSON
  std::string histogram_csv;   // delay histogram: bin_start_ms,bin_end_ms,count
};

CampaignReport run_campaign(const CampaignConfig& cfg);

// One model-training round per query: local gradient steps on device,
// sample-weighted model averaging at the coordinator.
struct FlRound {
  int round = 0;
  double loss = 0.0;  // pooled quadratic loss of the post-round global model
  Ms clock_ms = 0;
  Ms delay_ms = 0;
  double redundancy = 0.0;
};

struct FlReport {
  double initial_loss = 0.0;
  std::vector<FlRound> rounds;
  std::vector<double> model;
  Ms total_ms = 0;
  std::int64_t artifact_bytes = 0;
  std::string csv;  // round,loss,clock_ms,delay_ms,redundancy
};

FlReport run_fl_campaign(const CampaignConfig& cfg);

// Digest over every device profile and dataset the simulator would build:
// two runs agree on their fleets iff the digests match.
std::string fleet_digest(const FleetConfig& fleet, std::uint64_t seed);

// p99/mean of single-task response times (dispatch hop + wake + exec + reply
// hop) drawn from the fleet's models; the tail-heaviness dial for configs.
double response_shape(const FleetConfig& fleet, std::uint64_t seed, int samples);

// Nearest-rank percentile (q in (0,1]) of a sample set; sorts a copy.
Ms percentile_nearest_rank(std::vector<Ms> xs, double q);

}  // namespace fq
