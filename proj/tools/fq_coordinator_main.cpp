// Coordinator server: the transport-agnostic Coordinator core behind a
// framed-TCP front. One handler thread per connection, a timer thread for
// dispatch ticks, a shared registry so device-bound messages find their
// connection, and periodic state snapshots (account usage + response-time
// distributions) so restarts do not forget what the fleet learned.

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "fq/coord.hpp"
#include "fq/net.hpp"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fq::Ms now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

fq::CoordinatorConfig config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw fq::Error("BadConfig", "coordinator config must be a JSON object");
  fq::CoordinatorConfig c;
  c.eta_ms_per_device = j.value("eta_ms_per_device", c.eta_ms_per_device);
  c.wakeup_interval_ms = j.value("wakeup_interval_ms", c.wakeup_interval_ms);
  c.fl_wakeup_interval_ms = j.value("fl_wakeup_interval_ms", c.fl_wakeup_interval_ms);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.k_max = j.value("k_max", c.k_max);
  c.ecdf_window = j.value("ecdf_window", c.ecdf_window);
  c.min_devices = j.value("min_devices", c.min_devices);
  c.heartbeat_interval_ms = j.value("heartbeat_interval_ms", c.heartbeat_interval_ms);
  c.heartbeat_misses = j.value("heartbeat_misses", c.heartbeat_misses);
  c.debug_rows_per_device = j.value("debug_rows_per_device", c.debug_rows_per_device);
  if (j.contains("policy")) c.policy = fq::policy_from_name(j["policy"].get<std::string>());
  c.once_redundancy = j.value("once_redundancy", c.once_redundancy);
  c.incre_interval_ms = j.value("incre_interval_ms", c.incre_interval_ms);
  c.seed = j.value("seed", c.seed);
  c.quantum_period_ms = j.value("quantum_period_ms", c.quantum_period_ms);
  return c;
}

bool is_device_message(fq::MsgType t) {
  switch (t) {
    case fq::MsgType::Register:
    case fq::MsgType::Heartbeat:
    case fq::MsgType::ArtifactRequest:
    case fq::MsgType::Result:
    case fq::MsgType::Ack:
      return true;
    default:
      return false;
  }
}

struct SharedConn {
  explicit SharedConn(int fd) : conn(fd) {}
  fq::Conn conn;
  std::mutex send_mu;
};

class Server {
public:
  Server(fq::CoordinatorConfig cfg, fq::AccountStore accounts)
      : coord_(std::move(cfg), std::move(accounts)) {}

  fq::Coordinator& coord() { return coord_; }
  std::mutex& mu() { return mu_; }

  void register_device(const std::string& id, std::shared_ptr<SharedConn> sc) {
    std::lock_guard<std::mutex> lk(reg_mu_);
    device_conns_[id] = std::move(sc);
  }

  void forget_device(const std::string& id, const SharedConn* sc) {
    std::lock_guard<std::mutex> lk(reg_mu_);
    auto it = device_conns_.find(id);
    if (it != device_conns_.end() && it->second.get() == sc) device_conns_.erase(it);
  }

  void deliver(const std::vector<fq::Coordinator::Outbound>& outs) {
    for (const auto& o : outs) {
      std::shared_ptr<SharedConn> sc;
      {
        std::lock_guard<std::mutex> lk(reg_mu_);
        auto it = device_conns_.find(o.device);
        if (it == device_conns_.end()) continue;
        sc = it->second;
      }
      try {
        std::lock_guard<std::mutex> lk(sc->send_mu);
        sc->conn.send(o.msg);
      } catch (const fq::Error&) {
        // A dead link; the reader thread will notice and disconnect it.
      }
    }
  }

private:
  fq::Coordinator coord_;
  std::mutex mu_;  // guards coord_
  std::mutex reg_mu_;
  std::map<std::string, std::shared_ptr<SharedConn>> device_conns_;
};

std::atomic<bool> g_stop{false};
std::atomic<int> g_listen_fd{-1};

void on_signal(int) {
  g_stop.store(true);
  int fd = g_listen_fd.exchange(-1);
  if (fd >= 0) ::close(fd);
}

void handle_connection(Server* server, std::shared_ptr<SharedConn> sc) {
  std::string device_id;
  for (;;) {
    std::optional<fq::Message> m;
    try {
      m = sc->conn.recv();
    } catch (const fq::Error&) {
      break;  // framing violation or read failure: drop the connection
    }
    if (!m) break;

    std::vector<fq::Coordinator::Outbound> outs;
    std::vector<fq::Message> replies;
    if (is_device_message(m->type)) {
      std::string from = device_id;
      if (from.empty()) {
        json p = json::parse(m->payload, nullptr, false);
        if (p.is_object()) from = p.value("device", "");
      }
      if (m->type == fq::MsgType::Register && !from.empty()) {
        device_id = from;
        server->register_device(device_id, sc);
      }
      if (!from.empty()) {
        std::lock_guard<std::mutex> lk(server->mu());
        outs = server->coord().on_device_message(from, *m, now_ms());
      }
    } else {
      std::lock_guard<std::mutex> lk(server->mu());
      replies = server->coord().on_client_message(*m, now_ms());
    }
    server->deliver(outs);
    try {
      for (const auto& r : replies) {
        std::lock_guard<std::mutex> lk(sc->send_mu);
        sc->conn.send(r);
      }
    } catch (const fq::Error&) {
      break;
    }
  }
  if (!device_id.empty()) {
    {
      std::lock_guard<std::mutex> lk(server->mu());
      server->coord().on_device_disconnect(device_id, now_ms());
    }
    server->forget_device(device_id, sc.get());
  }
}

void save_snapshot(Server& server, const std::string& path) {
  if (path.empty()) return;
  std::string text;
  {
    std::lock_guard<std::mutex> lk(server.mu());
    text = server.coord().snapshot_to_text();
  }
  try {
    fq::write_file(path, text);
  } catch (const fq::Error& e) {
    std::cerr << "snapshot write failed: " << e.what() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated analytics coordinator"};
  std::string host = "127.0.0.1";
  int port = 4460;
  std::string config_path, policy_path, datasets_dir, audit_path, snapshot_path;
  int snapshot_interval_s = 30;
  app.add_option("--host", host, "bind address");
  app.add_option("--port", port, "bind port (0 picks a free one)");
  app.add_option("--config", config_path, "coordinator config JSON");
  app.add_option("--policy", policy_path, "accounts + blacklist policy JSON")->required();
  app.add_option("--datasets", datasets_dir, "directory of <name>.schema.json catalog entries");
  app.add_option("--audit", audit_path, "append audit records to this file");
  app.add_option("--snapshot", snapshot_path, "state snapshot file (loaded at boot)");
  app.add_option("--snapshot-interval", snapshot_interval_s, "seconds between snapshots");
  CLI11_PARSE(app, argc, argv);

  try {
    fq::CoordinatorConfig cfg;
    if (!config_path.empty()) cfg = config_from_json(fq::read_file(config_path));

    fq::PolicyFile pf = fq::parse_policy_file(fq::read_file(policy_path));
    cfg.blacklist = pf.blacklist;
    fq::AccountStore accounts(cfg.quantum_period_ms);
    accounts.load(pf);

    Server server(std::move(cfg), std::move(accounts));

    if (!datasets_dir.empty()) {
      for (const auto& entry : fs::directory_iterator(datasets_dir)) {
        const fs::path& p = entry.path();
        if (p.extension() != ".json") continue;
        std::string stem = p.stem().string();
        const std::string suffix = ".schema";
        if (stem.size() <= suffix.size() ||
            stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) != 0)
          continue;
        std::string name = stem.substr(0, stem.size() - suffix.size());
        server.coord().add_dataset_schema(name, fq::parse_schema_json(fq::read_file(p.string())));
      }
    }
    if (!audit_path.empty()) server.coord().audit().set_sink(audit_path);
    if (!snapshot_path.empty() && fs::exists(snapshot_path)) {
      server.coord().load_snapshot_text(fq::read_file(snapshot_path));
      std::cerr << "snapshot loaded from " << snapshot_path << "\n";
    }

    int listen_fd = fq::tcp_listen(host, port);
    g_listen_fd.store(listen_fd);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::signal(SIGPIPE, SIG_IGN);
    // Port on stdout so wrapper scripts can bind port 0 and read the result.
    std::cout << "listening " << host << ":" << fq::bound_port(listen_fd) << std::endl;

    std::thread timer([&server, &snapshot_path, snapshot_interval_s] {
      auto last_snapshot = std::chrono::steady_clock::now();
      while (!g_stop.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(25));
        std::vector<fq::Coordinator::Outbound> outs;
        {
          std::lock_guard<std::mutex> lk(server.mu());
          fq::Ms now = now_ms();
          fq::Ms w = server.coord().next_wakeup();
          if (server.coord().has_pending_outbound() || (w >= 0 && w <= now))
            outs = server.coord().on_wakeup(now);
        }
        server.deliver(outs);
        auto t = std::chrono::steady_clock::now();
        if (!snapshot_path.empty() &&
            t - last_snapshot >= std::chrono::seconds(snapshot_interval_s)) {
          last_snapshot = t;
          save_snapshot(server, snapshot_path);
        }
      }
    });

    while (!g_stop.load()) {
      int fd;
      try {
        fd = fq::tcp_accept(listen_fd);
      } catch (const fq::Error&) {
        break;  // listener closed during shutdown
      }
      auto sc = std::make_shared<SharedConn>(fd);
      std::thread(handle_connection, &server, std::move(sc)).detach();
    }

    g_stop.store(true);
    timer.join();
    save_snapshot(server, snapshot_path);
    return 0;
  } catch (const fq::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
