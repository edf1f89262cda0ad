// Device agent: loads its local datasets, registers with the coordinator, and
// runs a three-thread loop — a reader that feeds the DeviceCore, a heartbeat
// ticker, and a single worker that executes one task at a time so measured
// blocking time reflects real queueing.

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "fq/device.hpp"
#include "fq/net.hpp"
#include "json.hpp"

using Clock = std::chrono::steady_clock;

namespace {

std::atomic<bool> g_stop{false};

fq::Ms ms_since(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(b - a).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated analytics device agent"};
  std::string host = "127.0.0.1";
  int port = 4460;
  std::string id, data_dir;
  int cache_mb = 20;
  int heartbeat_ms = 10000;
  double lat = 0.0, lon = 0.0;
  std::string clipboard;
  app.add_option("--host", host, "coordinator address");
  app.add_option("--port", port, "coordinator port");
  app.add_option("--id", id, "device id")->required();
  app.add_option("--data", data_dir, "directory of <name>.csv + <name>.schema.json datasets");
  app.add_option("--cache-mb", cache_mb, "artifact cache size in MiB");
  app.add_option("--heartbeat-ms", heartbeat_ms, "heartbeat interval");
  app.add_option("--lat", lat, "guarded geo latitude");
  app.add_option("--lon", lon, "guarded geo longitude");
  app.add_option("--clipboard", clipboard, "guarded clipboard contents");
  CLI11_PARSE(app, argc, argv);

  try {
    fq::LocalStore store;
    if (!data_dir.empty()) store.load_dir(data_dir);

    fq::DeviceConfig cfg;
    cfg.device_id = id;
    cfg.cache_bytes = static_cast<std::size_t>(cache_mb) * 1024u * 1024u;
    fq::DeviceEnv env;
    env.device_id = id;
    env.geo_lat = lat;
    env.geo_lon = lon;
    env.clipboard = clipboard;
    fq::DeviceCore core(cfg, &store, env);

    // The coordinator may still be coming up; retry briefly before giving up.
    std::optional<fq::Conn> conn;
    for (int attempt = 0; attempt < 40; ++attempt) {
      try {
        conn.emplace(fq::tcp_connect(host, port));
        break;
      } catch (const fq::Error&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(250));
      }
    }
    if (!conn) {
      std::cerr << "cannot reach coordinator at " << host << ":" << port << "\n";
      return 1;
    }

    std::signal(SIGPIPE, SIG_IGN);
    std::signal(SIGINT, [](int) { g_stop.store(true); });
    std::signal(SIGTERM, [](int) { g_stop.store(true); });

    std::mutex core_mu;   // guards core + received_at
    std::mutex send_mu;   // serializes conn.send across threads
    std::condition_variable cv;
    std::map<std::string, Clock::time_point> received_at;

    auto send_locked = [&](const fq::Message& m) {
      std::lock_guard<std::mutex> lk(send_mu);
      conn->send(m);
    };

    send_locked(core.make_register());

    std::thread heartbeat([&] {
      auto last = Clock::now();
      while (!g_stop.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        auto now = Clock::now();
        if (ms_since(last, now) < heartbeat_ms) continue;
        last = now;
        try {
          send_locked(core.make_heartbeat());
        } catch (const fq::Error&) {
          g_stop.store(true);
          cv.notify_all();
        }
      }
    });

    std::thread worker([&] {
      for (;;) {
        std::unique_lock<std::mutex> lk(core_mu);
        cv.wait(lk, [&] { return g_stop.load() || core.has_ready(); });
        if (g_stop.load()) return;
        auto w = core.start_next();
        if (!w) continue;
        auto started = Clock::now();
        fq::Ms blocking = 0;
        auto it = received_at.find(w->task_id);
        if (it != received_at.end()) {
          blocking = ms_since(it->second, started);
          received_at.erase(it);
        }
        lk.unlock();

        // Pure compute; runs without the core lock so dispatches keep flowing.
        fq::ExecOutcome outcome = core.execute(*w);
        fq::Ms exec = ms_since(started, Clock::now());

        lk.lock();
        if (core.is_canceled(w->task_id)) continue;
        fq::Message result = core.make_result(*w, outcome, exec, blocking);
        lk.unlock();
        try {
          send_locked(result);
        } catch (const fq::Error&) {
          g_stop.store(true);
          return;
        }
      }
    });

    // Reader loop. recv_timeout lets us notice the stop flag between polls.
    while (!g_stop.load()) {
      bool eof = false;
      std::optional<fq::Message> m;
      try {
        m = conn->recv_timeout(500, &eof);
      } catch (const fq::Error&) {
        break;
      }
      if (eof) break;
      if (!m) continue;

      std::vector<fq::Message> replies;
      {
        std::lock_guard<std::mutex> lk(core_mu);
        if (m->type == fq::MsgType::Dispatch) {
          nlohmann::json p = nlohmann::json::parse(m->payload, nullptr, false);
          if (p.is_object() && p.contains("task"))
            received_at[p["task"].get<std::string>()] = Clock::now();
        }
        replies = core.on_message(*m);
      }
      cv.notify_all();
      try {
        for (const auto& r : replies) send_locked(r);
      } catch (const fq::Error&) {
        break;
      }
    }

    g_stop.store(true);
    cv.notify_all();
    worker.join();
    heartbeat.join();
    return 0;
  } catch (const fq::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
