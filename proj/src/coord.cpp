#include "fq/coord.hpp"

#include <algorithm>

#include "json.hpp"

using nlohmann::json;

namespace fq {

namespace {

std::vector<std::string> to_vec(const std::set<std::string>& s) {
  return std::vector<std::string>(s.begin(), s.end());
}

json sorted_list(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return json(v);
}

Message simple_msg(MsgType type, const json& payload, const std::string& qid = "") {
  Message m;
  m.type = type;
  m.query_id = qid;
  m.payload = payload.dump();
  return m;
}

Message error_msg(const std::string& code, const std::string& detail,
                  const std::string& qid = "") {
  json p;
  p["code"] = code;
  p["detail"] = detail;
  return simple_msg(MsgType::ErrorMsg, p, qid);
}

}  // namespace

Table make_dumb_table(const Schema& schema, int rows, Rng& rng) {
  Table t;
  t.schema = schema;
  for (int i = 0; i < rows; ++i) {
    std::vector<Value> row;
    row.reserve(schema.columns.size());
    for (const auto& col : schema.columns) {
      switch (col.type) {
        case Type::Int: row.emplace_back(rng.uniform_int(0, 100)); break;
        case Type::Float: row.emplace_back(rng.uniform(0.0, 100.0)); break;
        case Type::Str:
          row.emplace_back("s" + std::to_string(rng.uniform_int(0, 9)));
          break;
        case Type::Bool: row.emplace_back(rng.below(2) == 1); break;
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

Coordinator::Coordinator(CoordinatorConfig cfg, AccountStore accounts)
    : cfg_(std::move(cfg)),
      accounts_(std::move(accounts)),
      dists_(cfg_.ecdf_window),
      rng_(cfg_.seed) {}

void Coordinator::add_dataset_schema(const std::string& name, Schema schema) {
  catalog_[name] = std::move(schema);
}

bool Coordinator::device_fresh(const DeviceInfo& d, Ms now) const {
  return d.connected &&
         now - d.last_heartbeat <= cfg_.heartbeat_interval_ms * cfg_.heartbeat_misses;
}

int Coordinator::connected_devices() const {
  int n = 0;
  for (const auto& [id, d] : devices_)
    if (d.connected) ++n;
  return n;
}

std::vector<Coordinator::Outbound> Coordinator::on_device_message(
    const std::string& device, const Message& m, Ms now) {
  std::vector<Outbound> out;
  switch (m.type) {
    case MsgType::Register: {
      DeviceInfo& d = devices_[device];
      d.connected = true;
      d.last_heartbeat = now;
      json p;
      p["device"] = device;
      out.push_back({device, simple_msg(MsgType::Ack, p)});
      break;
    }
    case MsgType::Heartbeat: {
      DeviceInfo& d = devices_[device];
      d.connected = true;
      d.last_heartbeat = now;
      break;
    }
    case MsgType::ArtifactRequest: {
      json p = json::parse(m.payload);
      std::string hash = p.at("hash").get<std::string>();
      auto it = artifacts_.find(hash);
      if (it == artifacts_.end()) {
        out.push_back({device, error_msg("UnknownArtifact", hash, m.query_id)});
        break;
      }
      json reply;
      reply["bytes"] = it->second;
      reply["hash"] = hash;
      artifact_bytes_sent_ += static_cast<std::int64_t>(it->second.size());
      out.push_back({device, simple_msg(MsgType::ArtifactData, reply, m.query_id)});
      break;
    }
    case MsgType::Result: {
      auto qit = queries_.find(m.query_id);
      json ack;
      ack["task"] = json::parse(m.payload).value("task", "");
      if (qit == queries_.end()) {
        out.push_back({device, simple_msg(MsgType::Ack, ack, m.query_id)});
        break;
      }
      on_result(qit->second, m, now, &out);
      break;
    }
    default:
      break;  // ACKs and anything unexpected need no action
  }
  return out;
}

void Coordinator::on_device_disconnect(const std::string& device, Ms) {
  auto it = devices_.find(device);
  if (it != devices_.end()) it->second.connected = false;
}

std::vector<Message> Coordinator::on_client_message(const Message& m, Ms now) {
  switch (m.type) {
    case MsgType::Submit: return handle_submit(m, now);
    case MsgType::Status: return handle_status(m);
    case MsgType::ResultFetch: return handle_fetch(m);
    case MsgType::Debug: return handle_debug(m, now);
    case MsgType::CancelQuery: {
      // Device-facing CANCELs ride the wakeup path: queue them through a
      // pseudo-tick so the caller still gets a pure client reply list.
      std::vector<Outbound> dev;
      auto replies = handle_cancel_query(m, now, &dev);
      pending_outbound_.insert(pending_outbound_.end(), dev.begin(), dev.end());
      return replies;
    }
    default:
      return {error_msg("UnknownType", std::string("unexpected client message: ") +
                                           msg_type_name(m.type))};
  }
}

Message Coordinator::reject_message(const std::string& code, const std::string& detail,
                                    const std::vector<Violation>& violations,
                                    const std::string& query_id) const {
  json p;
  p["code"] = code;
  p["detail"] = detail;
  json vs = json::array();
  for (const auto& v : violations) {
    json jv;
    jv["code"] = v.code;
    jv["detail"] = v.detail;
    jv["name"] = violation_name(v.code);
    jv["path"] = v.path;
    vs.push_back(jv);
  }
  p["violations"] = vs;
  if (!query_id.empty()) p["query"] = query_id;
  return simple_msg(MsgType::Reject, p, query_id);
}

std::vector<Message> Coordinator::handle_submit(const Message& m, Ms now) {
  json p = json::parse(m.payload, nullptr, false);
  if (p.is_discarded() || !p.is_object() || !p.contains("manifest"))
    return {reject_message("BadManifest", "submit payload needs manifest", {}, "")};
  std::string credential = p.value("credential", "");
  const UserAccount* acct = accounts_.authenticate(credential);
  if (!acct) {
    audit_.append({now, "", "", "auth_failed", 0, ""});
    return {reject_message("AuthFailed", "unknown user or bad secret", {}, "")};
  }
  const std::string user = acct->user;

  QueryManifest qm;
  std::string manifest_text;
  try {
    qm = parse_manifest_text(p["manifest"].dump());
    manifest_text = manifest_to_text(qm);
  } catch (const Error& e) {
    audit_.append({now, user, "", "bad_manifest", 0, e.what()});
    return {reject_message(e.code, e.what(), {}, "")};
  }

  std::string qid = "q" + std::to_string(next_query_num_++);
  QueryRecord& q = queries_[qid];
  q.id = qid;
  q.user = user;
  q.manifest = std::move(qm);
  q.manifest_text = manifest_text;
  q.submitted_at = now;

  // Resolve the validation schema: catalog for literal sources, the
  // manifest-supplied schema for computed ones.
  Schema source_schema;
  if (q.manifest.pipeline.source.kind == DatasetRef::Kind::Literal) {
    auto it = catalog_.find(q.manifest.pipeline.source.name);
    if (it == catalog_.end()) {
      q.status = "rejected";
      audit_.append({now, user, qid, "reject", 0, "unknown dataset"});
      return {reject_message("UnknownDataset",
                             "dataset not in catalog: " + q.manifest.pipeline.source.name,
                             {}, qid)};
    }
    source_schema = it->second;
  } else {
    if (q.manifest.source_schema_json.empty()) {
      q.status = "rejected";
      audit_.append({now, user, qid, "reject", 0, "missing source_schema"});
      return {reject_message("BadManifest",
                             "computed source requires source_schema in the manifest", {},
                             qid)};
    }
    source_schema = parse_schema_json(q.manifest.source_schema_json);
  }
  try {
    validate_pipeline(q.manifest.pipeline, source_schema, q.manifest.params);
  } catch (const Error& e) {
    q.status = "rejected";
    audit_.append({now, user, qid, "type_error", 0, e.what()});
    return {reject_message(e.code, e.what(), {}, qid)};
  }

  if (!accounts_.admits(user, q.manifest.target, now)) {
    q.status = "rejected";
    audit_.append({now, user, qid, "quota_reject", 0,
                   "target " + std::to_string(q.manifest.target)});
    return {reject_message("QuotaExceeded", "per-period device quantum exhausted", {}, qid)};
  }

  std::string fp = submission_fingerprint(manifest_text, to_vec(acct->grants.datasets),
                                          to_vec(acct->grants.restricted),
                                          to_vec(cfg_.blacklist), cfg_.min_devices);
  Verdict verdict;
  auto cached = verdict_cache_.find(fp);
  if (cached != verdict_cache_.end()) {
    ++verdict_cache_hits_;
    verdict = verdict_from_text(cached->second);
    audit_.append({now, user, qid, "verdict_cache_hit", 0, fp.substr(0, 12)});
  } else {
    PrivacyConfig pc;
    pc.blacklist = cfg_.blacklist;
    pc.min_devices = cfg_.min_devices;
    verdict = static_check(q.manifest.pipeline, q.manifest.declared, acct->grants,
                           q.manifest.target, pc);
    ++static_checks_run_;
    verdict_cache_[fp] = verdict.to_text();
    audit_.append({now, user, qid, "static_check", 0, fp.substr(0, 12)});
  }
  q.verdict_text = verdict.to_text();
  if (!verdict.pass) {
    q.status = "rejected";
    for (const auto& v : verdict.violations)
      audit_.append({now, user, qid, "reject", v.code, v.detail});
    return {reject_message("Violations", "privacy check failed", verdict.violations, qid)};
  }
  audit_.append({now, user, qid, "verdict_pass", 0, ""});

  InstrumentationReport report;
  Pipeline instrumented = inject_runtime_checks(q.manifest.pipeline, &report);
  Artifact a;
  a.pipeline_text = pipeline_to_text(instrumented);
  a.declared = q.manifest.declared;
  a.blacklist = to_vec(cfg_.blacklist);
  a.restricted = to_vec(acct->grants.restricted);
  q.artifact_text = artifact_to_text(a);
  q.artifact_hash = artifact_hash(q.artifact_text);
  artifacts_[q.artifact_hash] = q.artifact_text;

  q.z = q.manifest.target;
  q.kmax = cfg_.k_max > 0 ? cfg_.k_max : q.z;
  q.eta = q.manifest.eta >= 0 ? q.manifest.eta : cfg_.eta_ms_per_device;
  q.policy = cfg_.policy;
  q.once_rho = cfg_.once_redundancy;
  bool fl = q.manifest.pipeline.local_agg.kind == AggKind::FedAvg;
  q.interval = fl ? cfg_.fl_wakeup_interval_ms
                  : (q.policy == Policy::Incre && cfg_.incre_interval_ms > 0
                         ? cfg_.incre_interval_ms
                         : cfg_.wakeup_interval_ms);
  q.task.target = q.z;
  q.task.now = now;
  q.deadline = now + cfg_.timeout_ms;
  q.status = "running";
  q.next_tick = now;
  audit_.append({now, user, qid, "submit", 0, q.artifact_hash.substr(0, 12)});

  json ok;
  ok["artifact"] = q.artifact_hash;
  ok["query"] = qid;
  return {simple_msg(MsgType::SubmitOk, ok, qid)};
}

std::vector<Message> Coordinator::handle_status(const Message& m) const {
  json p = json::parse(m.payload, nullptr, false);
  std::string qid = p.is_object() ? p.value("query", "") : "";
  auto it = queries_.find(qid);
  if (it == queries_.end()) return {error_msg("UnknownQuery", qid)};
  const QueryRecord& q = it->second;
  json s;
  s["dispatched"] = q.task.dispatched();
  s["errors"] = q.errors;
  s["merged"] = q.merged;
  s["query"] = q.id;
  s["returned_ok"] = q.task.returned_ok();
  s["status"] = q.status;
  s["target"] = q.z;
  s["violations"] = q.violations;
  return {simple_msg(MsgType::StatusOk, s, q.id)};
}

std::vector<Message> Coordinator::handle_fetch(const Message& m) const {
  json p = json::parse(m.payload, nullptr, false);
  std::string qid = p.is_object() ? p.value("query", "") : "";
  auto it = queries_.find(qid);
  if (it == queries_.end()) return {error_msg("UnknownQuery", qid)};
  const QueryRecord& q = it->second;
  if (q.status != "complete" || !q.released) {
    json e;
    e["code"] = "NotReady";
    e["detail"] = "query not complete";
    e["status"] = q.status;
    return {simple_msg(MsgType::ErrorMsg, e, q.id)};
  }
  Message doc;
  doc.type = MsgType::ResultDoc;
  doc.query_id = q.id;
  doc.payload = q.result_doc;
  return {doc};
}

std::vector<Message> Coordinator::handle_debug(const Message& m, Ms now) {
  json p = json::parse(m.payload, nullptr, false);
  if (p.is_discarded() || !p.is_object() || !p.contains("manifest"))
    return {reject_message("BadManifest", "debug payload needs manifest", {}, "")};
  const UserAccount* acct = accounts_.authenticate(p.value("credential", ""));
  if (!acct) return {reject_message("AuthFailed", "unknown user or bad secret", {}, "")};

  QueryManifest qm;
  try {
    qm = parse_manifest_text(p["manifest"].dump());
  } catch (const Error& e) {
    return {reject_message(e.code, e.what(), {}, "")};
  }
  Schema source_schema;
  if (qm.pipeline.source.kind == DatasetRef::Kind::Literal &&
      catalog_.count(qm.pipeline.source.name)) {
    source_schema = catalog_[qm.pipeline.source.name];
  } else if (!qm.source_schema_json.empty()) {
    source_schema = parse_schema_json(qm.source_schema_json);
  } else {
    return {reject_message("BadManifest", "debug needs a known dataset or source_schema",
                           {}, "")};
  }
  try {
    validate_pipeline(qm.pipeline, source_schema, qm.params);
  } catch (const Error& e) {
    return {reject_message(e.code, e.what(), {}, "")};
  }
  PrivacyConfig pc;
  pc.blacklist = cfg_.blacklist;
  pc.min_devices = cfg_.min_devices;
  Verdict verdict = static_check(qm.pipeline, qm.declared, acct->grants, qm.target, pc);
  if (!verdict.pass)
    return {reject_message("Violations", "privacy check failed", verdict.violations, "")};

  InstrumentationReport report;
  Pipeline instrumented = inject_runtime_checks(qm.pipeline, &report);
  int devices = p.value("devices", 5);
  if (devices < 1) devices = 1;
  auto seed = p.value("seed", static_cast<std::uint64_t>(cfg_.seed));
  audit_.append({now, acct->user, "", "debug_run", 0, std::to_string(devices) + " devices"});

  Partial combined;
  int merged = 0;
  for (int i = 0; i < devices; ++i) {
    Rng rng(seed_for(seed, "dumb", static_cast<std::uint64_t>(i)));
    Table t = make_dumb_table(source_schema, cfg_.debug_rows_per_device, rng);
    DeviceEnv env;
    env.device_id = "debug-" + std::to_string(i);
    env.geo_lat = 0.0;
    env.geo_lon = 0.0;
    env.clipboard = "debug";
    EnforcingInspector inspector(
        std::set<std::string>(qm.declared.begin(), qm.declared.end()), cfg_.blacklist,
        acct->grants.restricted);
    FlParams fl;
    const FlParams* flp = nullptr;
    if (instrumented.local_agg.kind == AggKind::FedAvg) {
      fl = fl_params_from(qm.params, instrumented.local_agg.fedavg_dim);
      flp = &fl;
    }
    try {
      resolve_source_name(instrumented, qm.params, &env, &inspector);
      Partial part = execute_local(instrumented, t, qm.params, flp, &env, &inspector);
      combined = merged == 0 ? part : merge(combined, part);
      ++merged;
    } catch (const ViolationAbort& v) {
      Violation viol{v.code, v.detail, ""};
      return {reject_message("RuntimeViolation", "debug execution hit a runtime check",
                             {viol}, "")};
    } catch (const Error& e) {
      return {reject_message(e.code, e.what(), {}, "")};
    }
  }
  json ok;
  ok["contributing"] = merged;
  ok["kind"] = agg_kind_name(qm.pipeline.final_agg);
  ok["value"] = json::parse(finalize_text(combined));
  return {simple_msg(MsgType::DebugOk, ok, "")};
}

std::vector<Message> Coordinator::handle_cancel_query(const Message& m, Ms now,
                                                      std::vector<Outbound>* out_dev) {
  json p = json::parse(m.payload, nullptr, false);
  const UserAccount* acct = accounts_.authenticate(p.is_object() ? p.value("credential", "") : "");
  if (!acct) return {error_msg("AuthFailed", "unknown user or bad secret")};
  std::string qid = p.value("query", "");
  auto it = queries_.find(qid);
  if (it == queries_.end()) return {error_msg("UnknownQuery", qid)};
  QueryRecord& q = it->second;
  if (q.user != acct->user) return {error_msg("AuthFailed", "not the query owner")};
  if (q.status == "running") {
    q.task.now = now;
    q.status = "canceled";
    q.completed_at = now;
    q.next_tick = -1;
    cancel_pending(q, out_dev);
    audit_.append({now, q.user, q.id, "cancel_query", 0, ""});
  }
  json ack;
  ack["query"] = qid;
  ack["status"] = q.status;
  return {simple_msg(MsgType::Ack, ack, qid)};
}

void Coordinator::cancel_pending(QueryRecord& q, std::vector<Outbound>* out) {
  for (auto& e : q.task.ledger) {
    if (e.outcome != TaskOutcome::Pending) continue;
    e.outcome = TaskOutcome::Canceled;
    json p;
    p["task"] = q.task_of_device[e.device];
    out->push_back({e.device, simple_msg(MsgType::Cancel, p, q.id)});
  }
}

void Coordinator::finalize_query(QueryRecord& q, Ms now, std::vector<Outbound>* out) {
  q.status = "complete";
  q.completed_at = now;
  q.next_tick = -1;
  q.released = true;
  json doc;
  doc["contributing"] = q.merged;
  doc["kind"] = agg_kind_name(q.manifest.pipeline.final_agg);
  QueryMetrics mets = metrics(q.id);
  json breakdown;
  breakdown["blocking_ms_mean"] = mets.blocking_ms_mean;
  breakdown["exec_ms_mean"] = mets.exec_ms_mean;
  breakdown["net_ms_mean"] = mets.net_ms_mean;
  json meta;
  meta["breakdown"] = breakdown;
  meta["delay_ms"] = mets.delay_ms;
  meta["dispatched"] = q.task.dispatched();
  meta["redundancy"] = mets.redundancy;
  meta["target"] = q.z;
  doc["metadata"] = meta;
  doc["query"] = q.id;
  doc["value"] = json::parse(finalize_text(q.combined));
  q.result_doc = doc.dump();
  audit_.append({now, q.user, q.id, "complete", 0,
                 "delay_ms=" + std::to_string(mets.delay_ms)});
  cancel_pending(q, out);
}

void Coordinator::on_result(QueryRecord& q, const Message& m, Ms now,
                            std::vector<Outbound>* out) {
  json p = json::parse(m.payload);
  std::string task = p.value("task", "");
  json ackp;
  ackp["task"] = task;

  auto dit = q.device_of_task.find(task);
  if (dit == q.device_of_task.end()) {
    out->push_back({p.value("device", ""), simple_msg(MsgType::Ack, ackp, q.id)});
    return;
  }
  const std::string& device = dit->second;
  auto ack_and_return = [&] { out->push_back({device, simple_msg(MsgType::Ack, ackp, q.id)}); };

  LedgerEntry* entry = nullptr;
  for (auto& e : q.task.ledger)
    if (e.device == device) entry = &e;
  if (!entry) {
    ack_and_return();
    return;
  }
  if (q.status != "running" || entry->outcome != TaskOutcome::Pending) {
    if (p.contains("partial")) ++q.late;
    ack_and_return();
    return;
  }

  q.task.now = now;
  if (p.contains("violation")) {
    entry->outcome = TaskOutcome::Violation;
    entry->returned_at = now;
    ++q.violations;
    int code = p["violation"].value("code", 0);
    audit_.append({now, q.user, q.id, "runtime_violation", code,
                   p["violation"].value("detail", "")});
  } else if (p.contains("error")) {
    entry->outcome = TaskOutcome::Error;
    entry->returned_at = now;
    ++q.errors;
    audit_.append({now, q.user, q.id, "task_error", 0,
                   p["error"].value("code", "") + ": " + p["error"].value("detail", "")});
  } else if (p.contains("partial")) {
    Partial incoming;
    bool ok = true;
    try {
      incoming = partial_from_text(p["partial"].dump());
      q.combined = q.merged == 0 ? incoming : merge(q.combined, incoming);
    } catch (const Error& e) {
      ok = false;
      entry->outcome = TaskOutcome::Error;
      entry->returned_at = now;
      ++q.errors;
      audit_.append({now, q.user, q.id, "merge_error", 0, e.what()});
    }
    if (ok) {
      ++q.merged;
      entry->outcome = TaskOutcome::Ok;
      entry->returned_at = now;
      Ms sample = now - entry->dispatched_at;
      dists_.observe(q.artifact_hash, sample);
      Ms exec = p.value("exec_ms", Ms{0});
      Ms block = p.value("blocking_ms", Ms{0});
      Ms net = sample - exec - block;
      if (net < 0) net = 0;
      q.sum_exec += exec;
      q.sum_block += block;
      q.sum_net += net;
      ++q.timing_n;
      if (q.task.returned_ok() >= q.z) finalize_query(q, now, out);
    }
  }
  ack_and_return();
}

std::vector<std::string> Coordinator::dispatchable_pool(const QueryRecord& q, Ms now) const {
  std::vector<std::string> pool;
  for (const auto& [id, d] : devices_) {
    if (!device_fresh(d, now)) continue;
    if (q.task_of_device.count(id)) continue;
    pool.push_back(id);
  }
  return pool;
}

void Coordinator::tick_query(QueryRecord& q, Ms now, std::vector<Outbound>* out) {
  if (q.status != "running") {
    q.next_tick = -1;
    return;
  }
  q.task.now = now;
  q.task.expire_pending(cfg_.timeout_ms);
  if (now >= q.deadline) {
    q.status = "timed_out";
    q.completed_at = q.deadline;
    q.next_tick = -1;
    audit_.append({now, q.user, q.id, "timeout", 0,
                   "returned " + std::to_string(q.task.returned_ok()) + "/" +
                       std::to_string(q.z)});
    cancel_pending(q, out);
    return;
  }
  const Ecdf& dist = dists_.lookup(q.artifact_hash);
  TickPlan plan =
      plan_tick(q.task, dist, q.z, q.deadline, q.eta, q.kmax, q.policy, q.once_rho);
  if (plan.complete) {  // completion normally happens on arrival; stay safe
    q.next_tick = now + q.interval;
    return;
  }
  int sent = 0;
  if (plan.dispatch > 0) {
    std::vector<std::string> pool = dispatchable_pool(q, now);
    if (static_cast<int>(pool.size()) < plan.dispatch) {
      ++q.starved_rounds;
      audit_.append({now, q.user, q.id, "starvation", 0,
                     "wanted " + std::to_string(plan.dispatch) + ", pool " +
                         std::to_string(pool.size())});
    }
    std::size_t want = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(plan.dispatch));
    auto picks = sample_without_replacement(rng_, pool.size(), want);
    for (std::size_t idx : picks) {
      const std::string& device = pool[idx];
      std::string task_id = q.id + "/" + device;
      q.task.ledger.push_back({device, now, TaskOutcome::Pending, -1});
      q.task_of_device[device] = task_id;
      q.device_of_task[task_id] = device;
      json dp;
      dp["artifact"] = q.artifact_hash;
      dp["declared"] = sorted_list(q.manifest.declared);
      dp["params"] = json::parse(params_to_text(q.manifest.params));
      dp["task"] = task_id;
      out->push_back({device, simple_msg(MsgType::Dispatch, dp, q.id)});
      ++sent;
    }
    if (sent > 0) {
      accounts_.debit(q.user, sent);
      audit_.append({now, q.user, q.id, "dispatch", 0, std::to_string(sent) + " devices"});
    }
  }
  q.dispatch_rounds.push_back(sent);
  q.next_tick = now + q.interval;
}

Ms Coordinator::next_wakeup() const {
  Ms best = -1;
  for (const auto& [id, q] : queries_) {
    if (q.next_tick < 0) continue;
    if (best < 0 || q.next_tick < best) best = q.next_tick;
  }
  return best;
}

std::vector<Coordinator::Outbound> Coordinator::on_wakeup(Ms now) {
  std::vector<Outbound> out;
  std::swap(out, pending_outbound_);
  for (auto& [id, q] : queries_)
    if (q.next_tick >= 0 && q.next_tick <= now) tick_query(q, now, &out);
  return out;
}

const QueryRecord* Coordinator::query(const std::string& id) const {
  auto it = queries_.find(id);
  return it == queries_.end() ? nullptr : &it->second;
}

std::vector<std::string> Coordinator::query_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, q] : queries_) out.push_back(id);
  return out;
}

QueryMetrics Coordinator::metrics(const std::string& id) const {
  auto it = queries_.find(id);
  if (it == queries_.end()) throw Error("UnknownQuery", id);
  const QueryRecord& q = it->second;
  if (q.status != "complete" && q.status != "timed_out" && q.status != "canceled")
    throw Error("Unfinished", "metrics need a finished query, status=" + q.status);
  QueryMetrics mets;
  mets.delay_ms = q.delay_ms();
  mets.redundancy = q.redundancy();
  if (q.timing_n > 0) {
    mets.net_ms_mean = static_cast<double>(q.sum_net) / q.timing_n;
    mets.exec_ms_mean = static_cast<double>(q.sum_exec) / q.timing_n;
    mets.blocking_ms_mean = static_cast<double>(q.sum_block) / q.timing_n;
  }
  return mets;
}

std::string Coordinator::snapshot_to_text() const {
  json j;
  json accounts = json::object();
  // Only mutable account state goes in the snapshot; grants and limits are config.
  for (const auto& user : accounts_.users()) {
    const UserAccount* a = accounts_.find(user);
    json ja;
    ja["period_anchor"] = a->period_anchor;
    ja["quantum_used"] = a->quantum_used;
    accounts[user] = ja;
  }
  j["accounts"] = accounts;
  json ecdf;
  ecdf["global"] = dists_.global_raw().sorted_samples();
  json classes = json::object();
  for (const auto& [cls, e] : dists_.classes()) classes[cls] = e.sorted_samples();
  ecdf["classes"] = classes;
  j["ecdf"] = ecdf;
  j["v"] = 1;
  return j.dump();
}

void Coordinator::load_snapshot_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("v", 0) != 1)
    throw Error("BadSnapshot", "unrecognized snapshot document");
  if (j.contains("accounts")) {
    for (const auto& [user, ja] : j["accounts"].items()) {
      if (UserAccount* a = accounts_.find(user)) {
        a->period_anchor = ja.value("period_anchor", Ms{0});
        a->quantum_used = ja.value("quantum_used", std::int64_t{0});
      }
    }
  }
  if (j.contains("ecdf")) {
    const json& e = j["ecdf"];
    if (e.contains("global")) {
      std::vector<Ms> samples = e["global"].get<std::vector<Ms>>();
      dists_.import_global(samples);
    }
    if (e.contains("classes")) {
      for (const auto& [cls, arr] : e["classes"].items())
        dists_.import_class(cls, arr.get<std::vector<Ms>>());
    }
  }
}

}  // namespace fq
