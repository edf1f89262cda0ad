#pragma once
// The coordinator: device pool, account bookkeeping, query lifecycle,
// privacy gate, artifact/verdict caches, dispatch planning, aggregation,
// and the audit trail.
//
// The class is transport- and clock-agnostic so the same code runs under the
// TCP server binary and inside the simulated fleet: callers feed messages in
// with an explicit `now` and route the returned outbound messages; ticking is
// driven through next_wakeup()/on_wakeup().

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fq/accounts.hpp"
#include "fq/agg.hpp"
#include "fq/artifact.hpp"
#include "fq/audit.hpp"
#include "fq/ecdf.hpp"
#include "fq/pipeline.hpp"
#include "fq/privacy.hpp"
#include "fq/sched.hpp"
#include "fq/simrng.hpp"
#include "fq/wire.hpp"

namespace fq {

struct CoordinatorConfig {
  double eta_ms_per_device = 50.0;
  Ms wakeup_interval_ms = 100;
  Ms fl_wakeup_interval_ms = 1000;  // model-training queries tick slower
  Ms timeout_ms = 100000;
  int k_max = 0;  // per-round dispatch cap; 0 = the query's target
  std::size_t ecdf_window = 10000;
  int min_devices = 10;
  Ms heartbeat_interval_ms = 10000;
  int heartbeat_misses = 3;
  int debug_rows_per_device = 20;
  Policy policy = Policy::Deck;
  double once_redundancy = 0.1;
  Ms incre_interval_ms = 0;  // 0 = wakeup_interval_ms
  std::set<std::string> blacklist;
  std::uint64_t seed = 1;
  Ms quantum_period_ms = 30LL * 24 * 3600 * 1000;
};

struct QueryRecord {
  std::string id;
  std::string user;
  QueryManifest manifest;
  std::string manifest_text;  // canonical
  std::string artifact_text;
  std::string artifact_hash;
  std::string verdict_text;
  TaskState task;
  Partial combined;
  int merged = 0;
  std::string status = "checking";  // ->rejected|running->complete|timed_out|canceled
  Ms submitted_at = 0;
  Ms completed_at = -1;
  Ms deadline = 0;
  double eta = 50.0;
  int z = 0;
  int kmax = 1;
  Ms interval = 100;
  Policy policy = Policy::Deck;
  double once_rho = 0.1;
  std::map<std::string, std::string> task_of_device;
  std::map<std::string, std::string> device_of_task;
  Ms next_tick = -1;
  bool released = false;
  std::string result_doc;  // RESULT_DOC payload once released
  std::int64_t sum_exec = 0, sum_block = 0, sum_net = 0;
  int timing_n = 0;
  int violations = 0;
  int errors = 0;
  int late = 0;
  int starved_rounds = 0;
  std::vector<int> dispatch_rounds;  // devices dispatched per tick, in order

  Ms delay_ms() const {
    return (status == "complete" ? completed_at : deadline) - submitted_at;
  }
  double redundancy() const {
    return z > 0 ? static_cast<double>(task.dispatched()) / z - 1.0 : 0.0;
  }
};

struct QueryMetrics {
  Ms delay_ms = 0;
  double redundancy = 0.0;
  double net_ms_mean = 0.0;
  double exec_ms_mean = 0.0;
  double blocking_ms_mean = 0.0;
};

// Schema-conforming synthetic rows for coordinator-side debug runs.
Table make_dumb_table(const Schema& schema, int rows, Rng& rng);

class Coordinator {
public:
  struct Outbound {
    std::string device;
    Message msg;
  };

  Coordinator(CoordinatorConfig cfg, AccountStore accounts);

  // Datasets the fleet is known to hold: name -> schema (for validation).
  void add_dataset_schema(const std::string& name, Schema schema);

  // --- device side ---
  std::vector<Outbound> on_device_message(const std::string& device, const Message& m,
                                          Ms now);
  void on_device_disconnect(const std::string& device, Ms now);
  int connected_devices() const;

  // --- client side (replies go back on the caller's connection) ---
  std::vector<Message> on_client_message(const Message& m, Ms now);

  // --- tick loop ---
  Ms next_wakeup() const;  // -1 when idle
  std::vector<Outbound> on_wakeup(Ms now);
  // True when client-triggered device messages (cancels) await the next wakeup.
  bool has_pending_outbound() const { return !pending_outbound_.empty(); }

  // --- introspection ---
  const QueryRecord* query(const std::string& id) const;
  std::vector<std::string> query_ids() const;
  QueryMetrics metrics(const std::string& id) const;  // throws for unfinished queries
  AuditLog& audit() { return audit_; }
  AccountStore& accounts() { return accounts_; }
  DistributionStore& dists() { return dists_; }
  const CoordinatorConfig& config() const { return cfg_; }
  std::int64_t artifact_bytes_sent() const { return artifact_bytes_sent_; }
  int static_checks_run() const { return static_checks_run_; }
  int verdict_cache_hits() const { return verdict_cache_hits_; }

  // State snapshot (accounts usage + response-time distributions).
  std::string snapshot_to_text() const;
  void load_snapshot_text(const std::string& text);

private:
  struct DeviceInfo {
    bool connected = false;
    Ms last_heartbeat = 0;
  };

  std::vector<Message> handle_submit(const Message& m, Ms now);
  std::vector<Message> handle_status(const Message& m) const;
  std::vector<Message> handle_fetch(const Message& m) const;
  std::vector<Message> handle_debug(const Message& m, Ms now);
  std::vector<Message> handle_cancel_query(const Message& m, Ms now,
                                           std::vector<Outbound>* out_dev);
  void on_result(QueryRecord& q, const Message& m, Ms now, std::vector<Outbound>* out);
  void tick_query(QueryRecord& q, Ms now, std::vector<Outbound>* out);
  void cancel_pending(QueryRecord& q, std::vector<Outbound>* out);
  void finalize_query(QueryRecord& q, Ms now, std::vector<Outbound>* out);
  std::vector<std::string> dispatchable_pool(const QueryRecord& q, Ms now) const;
  bool device_fresh(const DeviceInfo& d, Ms now) const;
  Message reject_message(const std::string& code, const std::string& detail,
                         const std::vector<Violation>& violations,
                         const std::string& query_id) const;

  CoordinatorConfig cfg_;
  AccountStore accounts_;
  AuditLog audit_;
  DistributionStore dists_;
  Rng rng_;
  std::map<std::string, Schema> catalog_;
  std::map<std::string, DeviceInfo> devices_;
  std::map<std::string, QueryRecord> queries_;
  std::map<std::string, std::string> artifacts_;      // hash -> canonical text
  std::map<std::string, std::string> verdict_cache_;  // fingerprint -> verdict text
  std::vector<Outbound> pending_outbound_;  // device messages staged by client ops
  std::int64_t artifact_bytes_sent_ = 0;
  int static_checks_run_ = 0;
  int verdict_cache_hits_ = 0;
  int next_query_num_ = 1;
};

}  // namespace fq
