#pragma once
// Device-side execution core, shared by the standalone device binary and the
// fleet simulator so there is exactly one implementation of the sandbox
// behavior: artifact cache negotiation, at-most-once task execution, FIFO
// queueing, cancellation, runtime privacy enforcement, and result reporting.
//
// The core is timing-agnostic: it decides *what* happens (queue, execute,
// reply) while the harness decides *when* (wall clock on a real device,
// simulated clock in the fleet simulator) and supplies the measured or drawn
// exec/blocking durations for the RESULT timing fields.

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fq/artifact.hpp"
#include "fq/expr.hpp"
#include "fq/lru.hpp"
#include "fq/table.hpp"
#include "fq/wire.hpp"

namespace fq {

// Read-only named datasets held by one device.
class LocalStore {
public:
  void add_dataset(const std::string& name, Schema schema, Table table);
  // Loads every <name>.csv + <name>.schema.json pair in a directory.
  void load_dir(const std::string& dir);
  bool has(const std::string& name) const;
  const Table* table(const std::string& name) const;  // nullptr when absent

private:
  std::map<std::string, Table> tables_;
};

struct DeviceConfig {
  std::string device_id;
  std::size_t cache_bytes = 20u * 1024u * 1024u;
};

struct TaskWork {
  std::string task_id;
  std::string query_id;
  std::string artifact_text;
  ParamMap params;
};

enum class OutcomeKind { Partial, Violation, Error };

struct ExecOutcome {
  OutcomeKind kind = OutcomeKind::Partial;
  std::string partial_text;  // Partial
  int violation_code = 0;    // Violation
  std::string error_code;    // Error
  std::string detail;
};

struct DeviceCounters {
  std::int64_t dispatches = 0;
  std::int64_t duplicate_dispatches = 0;
  std::int64_t cache_hits = 0;
  std::int64_t artifact_requests = 0;
  std::int64_t executed = 0;
  std::int64_t canceled_before_start = 0;
};

class DeviceCore {
public:
  DeviceCore(DeviceConfig cfg, LocalStore* store, DeviceEnv env);

  const std::string& id() const { return cfg_.device_id; }
  const DeviceCounters& counters() const { return counters_; }
  ArtifactCache& cache() { return cache_; }

  Message make_register() const;
  Message make_heartbeat() const;

  // Handles DISPATCH / ARTIFACT_DATA / CANCEL / ACK; returns replies to send
  // immediately.  Execution-ready tasks queue up for start_next().
  std::vector<Message> on_message(const Message& m);

  bool has_ready() const;
  // Pops the next non-canceled queued task.
  std::optional<TaskWork> start_next();

  // Executes the pipeline now (pure compute; no clocks inside).
  ExecOutcome execute(const TaskWork& w) const;

  // Builds the RESULT message with harness-supplied timing fields.
  Message make_result(const TaskWork& w, const ExecOutcome& o, Ms exec_ms,
                      Ms blocking_ms) const;

  bool is_canceled(const std::string& task_id) const { return canceled_.count(task_id) > 0; }

private:
  struct Parked {
    TaskWork work;
    std::string hash;
    bool re_requested = false;
  };

  Message artifact_request(const std::string& hash, const std::string& query_id) const;

  DeviceConfig cfg_;
  LocalStore* store_;
  DeviceEnv env_;
  ArtifactCache cache_;
  std::deque<TaskWork> ready_;
  std::map<std::string, Parked> parked_;  // task id -> waiting on artifact
  std::set<std::string> seen_tasks_;
  std::set<std::string> canceled_;
  DeviceCounters counters_;
};

}  // namespace fq
