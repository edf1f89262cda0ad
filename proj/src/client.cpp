#include "fq/client.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "fq/artifact.hpp"
#include "json.hpp"

namespace fq {

using nlohmann::json;

std::string load_credential() {
  const char* path = std::getenv(kCredentialEnv);
  if (!path || !*path)
    throw Error("NoCredential",
                std::string("set ") + kCredentialEnv + " to a file holding user:secret");
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error("NoCredential", std::string("credential file is unreadable: ") + path);
  }
  // First line only; trim surrounding whitespace.
  std::size_t end = text.find('\n');
  std::string line = end == std::string::npos ? text : text.substr(0, end);
  std::size_t a = line.find_first_not_of(" \t\r");
  std::size_t b = line.find_last_not_of(" \t\r");
  if (a == std::string::npos)
    throw Error("NoCredential", std::string("credential file is empty: ") + path);
  return line.substr(a, b - a + 1);
}

std::string canonicalize_manifest(const std::string& manifest_text) {
  return manifest_to_text(parse_manifest_text(manifest_text));
}

Client::Client(const ClientConfig& cfg) : cfg_(cfg), conn_(tcp_connect(cfg.host, cfg.port)) {}

Message Client::call(const Message& m) {
  conn_.send(m);
  bool eof = false;
  auto reply = conn_.recv_timeout(cfg_.io_timeout_ms, &eof);
  if (!reply)
    throw Error("NetFail", eof ? "connection closed by the coordinator"
                               : "timed out waiting for a reply");
  return *reply;
}

Message Client::submit(const std::string& manifest_text, const std::string& credential) {
  std::string canon = canonicalize_manifest(manifest_text);
  json p;
  p["credential"] = credential;
  p["manifest"] = json::parse(canon);
  Message m;
  m.type = MsgType::Submit;
  m.payload = p.dump();
  return call(m);
}

Message Client::status(const std::string& query_id) {
  json p;
  p["query"] = query_id;
  Message m;
  m.type = MsgType::Status;
  m.query_id = query_id;
  m.payload = p.dump();
  return call(m);
}

std::optional<Message> Client::fetch(const std::string& query_id, Ms timeout_ms, Ms poll_ms) {
  using Clock = std::chrono::steady_clock;
  auto begun = Clock::now();
  json p;
  p["query"] = query_id;
  Message m;
  m.type = MsgType::ResultFetch;
  m.query_id = query_id;
  m.payload = p.dump();
  for (;;) {
    Message reply = call(m);
    if (reply.type == MsgType::ResultDoc) return reply;
    if (reply.type == MsgType::ErrorMsg) {
      json rp = json::parse(reply.payload, nullptr, false);
      std::string code = rp.is_object() ? rp.value("code", "") : "";
      std::string status = rp.is_object() ? rp.value("status", "") : "";
      if (code != "NotReady") return reply;  // unknown query and the like
      if (status != "running" && status != "checking") return reply;  // terminal
    } else {
      return reply;  // unexpected but terminal for the caller
    }
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - begun);
    Ms left = timeout_ms - static_cast<Ms>(elapsed.count());
    if (left <= 0) return std::nullopt;
    Ms nap = poll_ms < left ? poll_ms : left;
    std::this_thread::sleep_for(std::chrono::milliseconds(nap));
  }
}

Message Client::debug(const std::string& manifest_text, const std::string& credential,
                      int devices, std::uint64_t seed) {
  std::string canon = canonicalize_manifest(manifest_text);
  json p;
  p["credential"] = credential;
  p["manifest"] = json::parse(canon);
  p["devices"] = devices;
  p["seed"] = seed;
  Message m;
  m.type = MsgType::Debug;
  m.payload = p.dump();
  return call(m);
}

Message Client::cancel(const std::string& query_id, const std::string& credential) {
  json p;
  p["credential"] = credential;
  p["query"] = query_id;
  Message m;
  m.type = MsgType::CancelQuery;
  m.query_id = query_id;
  m.payload = p.dump();
  return call(m);
}

FlRunSpec fl_spec_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error("BadConfig", "model spec must be a JSON object");
  FlRunSpec s;
  s.dataset = j.value("dataset", s.dataset);
  s.dim = j.value("dim", s.dim);
  if (s.dim < 1) throw Error("BadConfig", "model spec needs dim >= 1");
  if (j.contains("model")) {
    s.model = j["model"].get<std::vector<double>>();
    if (static_cast<int>(s.model.size()) != s.dim)
      throw Error("BadConfig", "model length does not match dim");
  } else {
    s.model.assign(static_cast<std::size_t>(s.dim), 0.0);
  }
  s.lr = j.value("lr", s.lr);
  s.epochs = j.value("epochs", s.epochs);
  s.target = j.value("target", s.target);
  return s;
}

std::string fl_spec_to_json(const FlRunSpec& s) {
  json j;
  j["dataset"] = s.dataset;
  j["dim"] = s.dim;
  j["epochs"] = s.epochs;
  j["lr"] = s.lr;
  j["model"] = s.model;
  j["target"] = s.target;
  return j.dump(2);
}

std::string fl_manifest_from_spec(const FlRunSpec& s) {
  json m;
  m["declared"] = json::array({s.dataset});
  json params;
  params["fl_model"] = json(s.model).dump();
  params["fl_lr"] = s.lr;
  params["fl_epochs"] = s.epochs;
  m["params"] = params;
  json pipe;
  pipe["source"] = {{"kind", "literal"}, {"name", s.dataset}};
  pipe["stages"] = json::array();
  pipe["local_agg"] = {{"dim", s.dim}, {"kind", "fedavg"}};
  pipe["final_agg"] = {{"kind", "fedavg"}};
  m["pipeline"] = pipe;
  m["target"] = s.target;
  return m.dump();
}

FlRunResult fl_run(Client& client, const std::string& credential, FlRunSpec spec,
                   int rounds, Ms round_timeout_ms) {
  FlRunResult out;
  out.model = spec.model;
  for (int r = 0; r < rounds; ++r) {
    Message reply = client.submit(fl_manifest_from_spec(spec), credential);
    if (reply.type != MsgType::SubmitOk) {
      json p = json::parse(reply.payload, nullptr, false);
      out.fail_code = p.is_object() ? p.value("code", "Reject") : "Reject";
      return out;
    }
    std::string qid = json::parse(reply.payload)["query"].get<std::string>();
    out.query_ids.push_back(qid);
    auto doc = client.fetch(qid, round_timeout_ms);
    if (!doc) {
      out.fail_code = "Timeout";
      return out;
    }
    if (doc->type != MsgType::ResultDoc) {
      json p = json::parse(doc->payload, nullptr, false);
      out.fail_code = p.is_object() ? p.value("code", "Failed") : "Failed";
      return out;
    }
    json d = json::parse(doc->payload);
    spec.model = d["value"].get<std::vector<double>>();
    out.model = spec.model;
    ++out.rounds_done;
  }
  out.ok = true;
  return out;
}

}  // namespace fq
