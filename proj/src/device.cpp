#include "fq/device.hpp"

#include <filesystem>

#include "fq/agg.hpp"
#include "fq/privacy.hpp"
#include "json.hpp"

using nlohmann::json;

namespace fq {

void LocalStore::add_dataset(const std::string& name, Schema schema, Table table) {
  table.schema = std::move(schema);
  tables_[name] = std::move(table);
}

void LocalStore::load_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir)) throw Error("BadPath", "dataset directory missing: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    fs::path p = entry.path();
    if (p.extension() != ".csv") continue;
    std::string name = p.stem().string();
    fs::path sidecar = p.parent_path() / (name + ".schema.json");
    if (!fs::exists(sidecar))
      throw Error("BadPath", "missing schema sidecar for dataset: " + name);
    Schema schema = parse_schema_json(read_file(sidecar.string()));
    tables_[name] = load_csv(read_file(p.string()), schema);
  }
}

bool LocalStore::has(const std::string& name) const { return tables_.count(name) > 0; }

const Table* LocalStore::table(const std::string& name) const {
  auto it = tables_.find(name);
  return it == tables_.end() ? nullptr : &it->second;
}

DeviceCore::DeviceCore(DeviceConfig cfg, LocalStore* store, DeviceEnv env)
    : cfg_(std::move(cfg)), store_(store), env_(std::move(env)), cache_(cfg_.cache_bytes) {}

Message DeviceCore::make_register() const {
  Message m;
  m.type = MsgType::Register;
  json p;
  p["cache_bytes"] = cfg_.cache_bytes;
  p["device"] = cfg_.device_id;
  m.payload = p.dump();
  return m;
}

Message DeviceCore::make_heartbeat() const {
  Message m;
  m.type = MsgType::Heartbeat;
  json p;
  p["device"] = cfg_.device_id;
  m.payload = p.dump();
  return m;
}

Message DeviceCore::artifact_request(const std::string& hash,
                                     const std::string& query_id) const {
  Message m;
  m.type = MsgType::ArtifactRequest;
  m.query_id = query_id;
  json p;
  p["device"] = cfg_.device_id;
  p["hash"] = hash;
  m.payload = p.dump();
  return m;
}

std::vector<Message> DeviceCore::on_message(const Message& m) {
  std::vector<Message> out;
  switch (m.type) {
    case MsgType::Dispatch: {
      json p = json::parse(m.payload);
      std::string task = p.at("task").get<std::string>();
      ++counters_.dispatches;
      if (seen_tasks_.count(task)) {
        ++counters_.duplicate_dispatches;
        Message ack;
        ack.type = MsgType::Ack;
        ack.query_id = m.query_id;
        json ap;
        ap["device"] = cfg_.device_id;
        ap["task"] = task;
        ack.payload = ap.dump();
        out.push_back(ack);
        break;
      }
      seen_tasks_.insert(task);
      TaskWork w;
      w.task_id = task;
      w.query_id = m.query_id;
      if (p.contains("params")) w.params = params_from_text(p["params"].dump());
      std::string hash = p.at("artifact").get<std::string>();
      if (const std::string* bytes = cache_.get(hash)) {
        ++counters_.cache_hits;
        w.artifact_text = *bytes;
        ready_.push_back(std::move(w));
      } else {
        ++counters_.artifact_requests;
        parked_[task] = Parked{std::move(w), hash, false};
        out.push_back(artifact_request(hash, m.query_id));
      }
      break;
    }
    case MsgType::ArtifactData: {
      json p = json::parse(m.payload);
      std::string hash = p.at("hash").get<std::string>();
      std::string bytes = p.at("bytes").get<std::string>();
      if (artifact_hash(bytes) == hash) {
        cache_.put(hash, bytes);  // oversize artifacts run uncached
        for (auto it = parked_.begin(); it != parked_.end();) {
          if (it->second.hash == hash) {
            TaskWork w = std::move(it->second.work);
            w.artifact_text = bytes;
            if (!canceled_.count(w.task_id)) ready_.push_back(std::move(w));
            it = parked_.erase(it);
          } else {
            ++it;
          }
        }
      } else {
        bool requested_again = false;
        for (auto it = parked_.begin(); it != parked_.end();) {
          if (it->second.hash != hash) {
            ++it;
            continue;
          }
          if (!it->second.re_requested) {
            it->second.re_requested = true;
            if (!requested_again) {
              ++counters_.artifact_requests;
              out.push_back(artifact_request(hash, it->second.work.query_id));
              requested_again = true;
            }
            ++it;
          } else {
            ExecOutcome o;
            o.kind = OutcomeKind::Error;
            o.error_code = "HASH_MISMATCH";
            o.detail = "artifact digest mismatch after retry";
            out.push_back(make_result(it->second.work, o, 0, 0));
            it = parked_.erase(it);
          }
        }
      }
      break;
    }
    case MsgType::Cancel: {
      json p = json::parse(m.payload);
      std::string task = p.at("task").get<std::string>();
      canceled_.insert(task);
      parked_.erase(task);  // settled without a result
      Message ack;
      ack.type = MsgType::Ack;
      ack.query_id = m.query_id;
      json ap;
      ap["device"] = cfg_.device_id;
      ap["task"] = task;
      ack.payload = ap.dump();
      out.push_back(ack);
      break;
    }
    default:
      break;  // ACK and anything else needs no device action
  }
  return out;
}

bool DeviceCore::has_ready() const {
  for (const auto& w : ready_)
    if (!canceled_.count(w.task_id)) return true;
  return false;
}

std::optional<TaskWork> DeviceCore::start_next() {
  while (!ready_.empty()) {
    TaskWork w = std::move(ready_.front());
    ready_.pop_front();
    if (canceled_.count(w.task_id)) {
      ++counters_.canceled_before_start;
      continue;
    }
    ++counters_.executed;
    return w;
  }
  return std::nullopt;
}

ExecOutcome DeviceCore::execute(const TaskWork& w) const {
  ExecOutcome o;
  try {
    Artifact a = artifact_from_text(w.artifact_text);
    Pipeline p = parse_pipeline_text(a.pipeline_text);
    EnforcingInspector inspector(
        std::set<std::string>(a.declared.begin(), a.declared.end()),
        std::set<std::string>(a.blacklist.begin(), a.blacklist.end()),
        std::set<std::string>(a.restricted.begin(), a.restricted.end()));
    std::string source = resolve_source_name(p, w.params, &env_, &inspector);
    const Table* tbl = store_ ? store_->table(source) : nullptr;
    if (!tbl) {
      o.kind = OutcomeKind::Error;
      o.error_code = "DATASET_ABSENT";
      o.detail = "dataset not present on this device: " + source;
      return o;
    }
    FlParams fl;
    const FlParams* flp = nullptr;
    if (p.local_agg.kind == AggKind::FedAvg) {
      fl = fl_params_from(w.params, p.local_agg.fedavg_dim);
      flp = &fl;
    }
    Partial part = execute_local(p, *tbl, w.params, flp, &env_, &inspector);
    o.kind = OutcomeKind::Partial;
    o.partial_text = partial_to_text(part);
  } catch (const ViolationAbort& v) {
    o.kind = OutcomeKind::Violation;
    o.violation_code = v.code;
    o.detail = v.detail;
  } catch (const Error& e) {
    o.kind = OutcomeKind::Error;
    o.error_code = e.code;
    o.detail = e.what();
  }
  return o;
}

Message DeviceCore::make_result(const TaskWork& w, const ExecOutcome& o, Ms exec_ms,
                                Ms blocking_ms) const {
  Message m;
  m.type = MsgType::Result;
  m.query_id = w.query_id;
  json p;
  p["blocking_ms"] = blocking_ms;
  p["device"] = cfg_.device_id;
  p["exec_ms"] = exec_ms;
  p["task"] = w.task_id;
  switch (o.kind) {
    case OutcomeKind::Partial:
      p["partial"] = json::parse(o.partial_text);
      break;
    case OutcomeKind::Violation:
      p["violation"] = {{"code", o.violation_code}, {"detail", o.detail}};
      break;
    case OutcomeKind::Error:
      p["error"] = {{"code", o.error_code}, {"detail", o.detail}};
      break;
  }
  m.payload = p.dump();
  return m;
}

}  // namespace fq
