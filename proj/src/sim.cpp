#include "fq/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>

#include "fq/device.hpp"
#include "fq/simrng.hpp"
#include "json.hpp"

namespace fq {

using nlohmann::json;

namespace {

constexpr const char* kSimUser = "researcher";
constexpr const char* kSimSecret = "sim-secret";
constexpr double kPi = 3.14159265358979323846;
constexpr Ms kDayMs = 24LL * 3600 * 1000;

std::string device_name(int i) {
  // Zero-padded so lexicographic device order equals numeric order everywhere.
  char buf[16];
  std::snprintf(buf, sizeof buf, "d%05d", i);
  return buf;
}

struct Profile {
  double net_factor = 1.0;
  double exec_factor = 1.0;
  double lat = 0.0;
  double lon = 0.0;
};

Profile profile_for(const FleetConfig& f, std::uint64_t seed, int i) {
  Rng r(seed_for(seed, "profile", static_cast<std::uint64_t>(i)));
  double ns = std::max(1.0, f.net.device_spread);
  double es = std::max(1.0, f.exec.device_spread);
  Profile p;
  p.net_factor = std::exp(r.uniform(-std::log(ns), std::log(ns)));
  p.exec_factor = std::exp(r.uniform(-std::log(es), std::log(es)));
  p.lat = r.uniform(-60.0, 60.0);
  p.lon = r.uniform(-180.0, 180.0);
  return p;
}

double diurnal_scale(const NetModel& n, Ms t) {
  if (!n.diurnal) return 1.0;
  double phase = 2.0 * kPi * static_cast<double>(t % kDayMs) / static_cast<double>(kDayMs);
  double mid = 0.5 * (n.diurnal_low + n.diurnal_high);
  double amp = 0.5 * (n.diurnal_high - n.diurnal_low);
  return mid + amp * std::sin(phase);
}

Ms to_ms(double v) {
  Ms ms = static_cast<Ms>(std::llround(v));
  return ms < 1 ? 1 : ms;
}

double draw_net(const NetModel& n, double factor, double scale, Rng& r) {
  return static_cast<double>(to_ms(r.lognormal(std::log(n.median_ms * factor * scale), n.sigma)));
}

double draw_exec(const ExecModel& e, double factor, Rng& r) {
  return static_cast<double>(to_ms(r.lognormal(std::log(e.median_ms * factor), e.sigma)));
}

double draw_wake(const SleepModel& s, Rng& r) {
  if (s.prob <= 0.0 || r.uniform01() >= s.prob) return 0.0;
  return static_cast<double>(r.uniform_int(s.wake_min_ms, s.wake_max_ms));
}

Ms exp_ms(Rng& r, double mean_ms) {
  if (mean_ms <= 0.0) return 1;
  return to_ms(r.exponential(1.0 / mean_ms));
}

Schema usage_schema() {
  return Schema{{{"category", Type::Str}, {"duration_ms", Type::Int}, {"value", Type::Float}}};
}

Table usage_table(const DataModel& d, Rng& r) {
  Table t;
  t.schema = usage_schema();
  for (int i = 0; i < d.rows_per_device; ++i) {
    std::string cat = "c" + std::to_string(r.uniform_int(0, 7));
    std::int64_t dur = r.uniform_int(1, 10000);
    double val = r.uniform(0.0, 100.0);
    t.rows.push_back({Value(std::move(cat)), Value(dur), Value(val)});
  }
  return t;
}

Schema fl_schema(int dim) {
  Schema s;
  for (int i = 0; i < dim; ++i) s.columns.push_back({"x" + std::to_string(i), Type::Float});
  s.columns.push_back({"y", Type::Float});
  return s;
}

std::vector<double> true_weights(std::uint64_t seed, int dim) {
  Rng r(seed_for(seed, "weights", 0));
  std::vector<double> w(static_cast<std::size_t>(dim));
  for (auto& x : w) x = r.uniform(-1.0, 1.0);
  return w;
}

// Linear data y = x.w + noise; non-IID fleets shift each device's feature
// means so per-device label distributions visibly differ.
Table fl_table(const DataModel& d, std::uint64_t seed, int dev,
               const std::vector<double>& w, Rng& r) {
  int dim = d.fl_dim;
  std::vector<double> shift(static_cast<std::size_t>(dim), 0.0);
  if (d.noniid) {
    Rng s(seed_for(seed, "shift", static_cast<std::uint64_t>(dev)));
    for (auto& x : shift) x = s.uniform(-2.0, 2.0);
  }
  Table t;
  t.schema = fl_schema(dim);
  for (int i = 0; i < d.fl_rows_per_device; ++i) {
    std::vector<Value> row;
    row.reserve(static_cast<std::size_t>(dim) + 1);
    double y = 0.0;
    for (int j = 0; j < dim; ++j) {
      double x = shift[static_cast<std::size_t>(j)] + r.normal(0.0, 1.0);
      y += w[static_cast<std::size_t>(j)] * x;
      row.emplace_back(x);
    }
    y += r.normal(0.0, 0.1);
    row.emplace_back(y);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void validate_campaign(const CampaignConfig& cfg) {
  const FleetConfig& f = cfg.fleet;
  if (f.devices < 1) throw Error("BadConfig", "fleet needs at least one device");
  if (cfg.z < 1) throw Error("BadConfig", "target must be >= 1");
  if (cfg.queries < 0) throw Error("BadConfig", "queries must be >= 0");
  if (f.devices < cfg.min_devices)
    throw Error("FleetTooSmall", "fleet of " + std::to_string(f.devices) +
                                     " is below the anonymity floor of " +
                                     std::to_string(cfg.min_devices));
  if (cfg.z < cfg.min_devices)
    throw Error("BadConfig", "target " + std::to_string(cfg.z) +
                                 " is below the anonymity floor of " +
                                 std::to_string(cfg.min_devices));
  if (f.devices < cfg.z)
    throw Error("FleetTooSmall", "fleet of " + std::to_string(f.devices) +
                                     " cannot satisfy a target of " + std::to_string(cfg.z));
  if (cfg.policy == Policy::Once &&
      once_initial_count(cfg.z, cfg.once_redundancy) > f.devices)
    throw Error("PolicyInfeasible",
                "single-shot over-dispatch of " +
                    std::to_string(once_initial_count(cfg.z, cfg.once_redundancy)) +
                    " exceeds the fleet size " + std::to_string(f.devices));
  if (f.net.median_ms <= 0.0 || f.exec.median_ms <= 0.0)
    throw Error("BadConfig", "latency medians must be positive");
  if (f.net.sigma < 0.0 || f.exec.sigma < 0.0)
    throw Error("BadConfig", "lognormal sigma must be >= 0");
  if (f.net.diurnal && (f.net.diurnal_low <= 0.0 || f.net.diurnal_high < f.net.diurnal_low))
    throw Error("BadConfig", "day-cycle scales must satisfy 0 < low <= high");
  if (f.sleep.prob < 0.0 || f.sleep.prob > 1.0)
    throw Error("BadConfig", "sleep probability must be in [0,1]");
  if (f.sleep.wake_min_ms < 0 || f.sleep.wake_max_ms < f.sleep.wake_min_ms)
    throw Error("BadConfig", "wake window must be ordered and non-negative");
  if (f.data.rows_per_device < 0) throw Error("BadConfig", "rows_per_device must be >= 0");
  if (f.data.fl_dim > 0 && f.data.fl_rows_per_device < 1)
    throw Error("BadConfig", "a training table needs at least one row per device");
  if (cfg.timeout_ms < 1 || cfg.wakeup_interval_ms < 1 || cfg.heartbeat_interval_ms < 1)
    throw Error("BadConfig", "timers must be positive");
  if (cfg.gap_ms < 0) throw Error("BadConfig", "gap_ms must be >= 0");
}

// --- event engine ----------------------------------------------------------

enum class EvKind { Boot, Heartbeat, Churn, DevRecv, CoordRecv, StartCheck, Finish, Wakeup };

struct Ev {
  Ms at = 0;
  std::uint64_t seq = 0;
  EvKind kind = EvKind::Boot;
  int dev = -1;
  Message msg;
  std::string task;
};

struct EvLater {
  bool operator()(const Ev& a, const Ev& b) const {
    if (a.at != b.at) return a.at > b.at;
    return a.seq > b.seq;
  }
};

struct RunningTask {
  TaskWork work;
  Ms received = 0;
  Ms started = 0;  // after any wake delay
};

struct SimDevice {
  std::string id;
  std::unique_ptr<LocalStore> store;
  std::unique_ptr<DeviceCore> core;
  double net_factor = 1.0;
  double exec_factor = 1.0;
  Rng rng_net{0};
  Rng rng_exec{0};
  Rng rng_sleep{0};
  Rng rng_churn{0};
  bool connected = true;
  std::optional<RunningTask> running;
  std::map<std::string, Ms> received_at;  // task id -> dispatch arrival time
  std::vector<Message> outbox;            // store-and-forward while offline
};

class FleetSim {
public:
  explicit FleetSim(const CampaignConfig& cfg)
      : cfg_(cfg), coord_(coordinator_config(cfg), sim_accounts(cfg)) {
    build_fleet();
  }

  Coordinator& coord() { return coord_; }
  Ms clock() const { return clock_; }
  std::int64_t wire_bytes() const { return wire_bytes_; }

  // Boots every device and runs until the whole fleet has registered.
  void start() {
    for (int i = 0; i < static_cast<int>(devs_.size()); ++i) {
      Ev ev;
      ev.at = 1 + static_cast<Ms>(i % 1499);
      ev.kind = EvKind::Boot;
      ev.dev = i;
      push(std::move(ev));
    }
    while (registered_ < static_cast<int>(devs_.size())) {
      if (heap_.empty()) throw Error("SimStalled", "fleet never finished registering");
      step();
    }
  }

  // Drains events up to `at`, then submits; returns the coordinator's reply.
  Message submit(const std::string& manifest_text, Ms at) {
    run_until(at);
    if (clock_ < at) clock_ = at;
    json p;
    p["credential"] = std::string(kSimUser) + ":" + kSimSecret;
    p["manifest"] = json::parse(manifest_text);
    Message m;
    m.type = MsgType::Submit;
    m.payload = p.dump();
    auto replies = coord_.on_client_message(m, clock_);
    ensure_wakeup();
    return replies.at(0);
  }

  std::string run_query_to_end(const std::string& qid) {
    while (true) {
      const QueryRecord* q = coord_.query(qid);
      if (!q) throw Error("UnknownQuery", qid);
      if (q->status != "running" && q->status != "checking") return q->status;
      if (heap_.empty())
        throw Error("SimStalled", "no events while query " + qid + " is still running");
      step();
    }
  }

  Message fetch(const std::string& qid) {
    json p;
    p["query"] = qid;
    Message m;
    m.type = MsgType::ResultFetch;
    m.query_id = qid;
    m.payload = p.dump();
    return coord_.on_client_message(m, clock_).at(0);
  }

  double pooled_loss(const std::vector<double>& w) const {
    if (fl_x_.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < fl_x_.size(); ++i) {
      double pred = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) pred += fl_x_[i][j] * w[j];
      double e = pred - fl_y_[i];
      acc += e * e;
    }
    return acc / (2.0 * static_cast<double>(fl_x_.size()));
  }

private:
  static CoordinatorConfig coordinator_config(const CampaignConfig& cfg) {
    CoordinatorConfig cc;
    cc.eta_ms_per_device = cfg.eta;
    cc.wakeup_interval_ms = cfg.wakeup_interval_ms;
    cc.fl_wakeup_interval_ms = cfg.fl_wakeup_interval_ms;
    cc.timeout_ms = cfg.timeout_ms;
    cc.k_max = cfg.k_max;
    cc.min_devices = cfg.min_devices;
    cc.heartbeat_interval_ms = cfg.heartbeat_interval_ms;
    cc.policy = cfg.policy;
    cc.once_redundancy = cfg.once_redundancy;
    cc.incre_interval_ms = cfg.incre_interval_ms;
    cc.seed = cfg.seed;
    return cc;
  }

  static AccountStore sim_accounts(const CampaignConfig& cfg) {
    AccountStore as;
    UserAccount a;
    a.user = kSimUser;
    a.secret = kSimSecret;
    a.grants.datasets = {cfg.fleet.data.name, cfg.fleet.data.fl_name};
    a.quantum_limit = std::int64_t{1} << 60;  // campaigns meter usage, not limits
    as.add(std::move(a));
    return as;
  }

  void build_fleet() {
    const FleetConfig& f = cfg_.fleet;
    std::vector<double> w;
    if (f.data.fl_dim > 0) w = true_weights(cfg_.seed, f.data.fl_dim);
    devs_.reserve(static_cast<std::size_t>(f.devices));
    for (int i = 0; i < f.devices; ++i) {
      SimDevice d;
      d.id = device_name(i);
      Profile p = profile_for(f, cfg_.seed, i);
      d.net_factor = p.net_factor;
      d.exec_factor = p.exec_factor;
      d.store = std::make_unique<LocalStore>();
      Rng data_rng(seed_for(cfg_.seed, "data", static_cast<std::uint64_t>(i)));
      d.store->add_dataset(f.data.name, usage_schema(), usage_table(f.data, data_rng));
      if (f.data.fl_dim > 0) {
        Table t = fl_table(f.data, cfg_.seed, i, w, data_rng);
        for (const auto& row : t.rows) {
          std::vector<double> xs(static_cast<std::size_t>(f.data.fl_dim));
          for (int j = 0; j < f.data.fl_dim; ++j)
            xs[static_cast<std::size_t>(j)] = row[static_cast<std::size_t>(j)].as_float();
          fl_x_.push_back(std::move(xs));
          fl_y_.push_back(row.back().as_float());
        }
        d.store->add_dataset(f.data.fl_name, fl_schema(f.data.fl_dim), std::move(t));
      }
      DeviceEnv env;
      env.device_id = d.id;
      env.geo_lat = p.lat;
      env.geo_lon = p.lon;
      env.clipboard = "clip:" + d.id;
      d.core = std::make_unique<DeviceCore>(DeviceConfig{d.id, 20u * 1024u * 1024u},
                                            d.store.get(), env);
      d.rng_net = Rng(seed_for(cfg_.seed, "net", static_cast<std::uint64_t>(i)));
      d.rng_exec = Rng(seed_for(cfg_.seed, "exec", static_cast<std::uint64_t>(i)));
      d.rng_sleep = Rng(seed_for(cfg_.seed, "sleep", static_cast<std::uint64_t>(i)));
      d.rng_churn = Rng(seed_for(cfg_.seed, "churn", static_cast<std::uint64_t>(i)));
      index_[d.id] = i;
      devs_.push_back(std::move(d));
    }
    coord_.add_dataset_schema(f.data.name, usage_schema());
    if (f.data.fl_dim > 0) coord_.add_dataset_schema(f.data.fl_name, fl_schema(f.data.fl_dim));
  }

  void push(Ev ev) {
    ev.seq = seq_++;
    heap_.push(std::move(ev));
  }

  void run_until(Ms t) {
    while (!heap_.empty() && heap_.top().at <= t) step();
  }

  void step() {
    Ev ev = heap_.top();
    heap_.pop();
    clock_ = ev.at;
    process(ev);
  }

  Ms net_delay(SimDevice& d) {
    return static_cast<Ms>(
        draw_net(cfg_.fleet.net, d.net_factor, diurnal_scale(cfg_.fleet.net, clock_), d.rng_net));
  }

  void to_coord(int dev, const Message& m) {
    wire_bytes_ += static_cast<std::int64_t>(encode_frame(m).size());
    Ev ev;
    ev.at = clock_ + net_delay(devs_[static_cast<std::size_t>(dev)]);
    ev.kind = EvKind::CoordRecv;
    ev.dev = dev;
    ev.msg = m;
    push(std::move(ev));
  }

  void to_device(int dev, const Message& m) {
    SimDevice& d = devs_[static_cast<std::size_t>(dev)];
    if (!d.connected) return;  // dead link: the coordinator's freshness rules cope
    wire_bytes_ += static_cast<std::int64_t>(encode_frame(m).size());
    Ev ev;
    ev.at = clock_ + net_delay(d);
    ev.kind = EvKind::DevRecv;
    ev.dev = dev;
    ev.msg = m;
    push(std::move(ev));
  }

  // Devices compute while offline but can only upload once reconnected.
  void from_device(int dev, const Message& m) {
    SimDevice& d = devs_[static_cast<std::size_t>(dev)];
    if (d.connected)
      to_coord(dev, m);
    else
      d.outbox.push_back(m);
  }

  void route(const std::vector<Coordinator::Outbound>& outs) {
    for (const auto& o : outs) {
      auto it = index_.find(o.device);
      if (it == index_.end()) continue;
      to_device(it->second, o.msg);
    }
  }

  void ensure_wakeup() {
    Ms w = coord_.next_wakeup();
    if (coord_.has_pending_outbound()) w = (w < 0) ? clock_ : std::min(w, clock_);
    if (w < 0) return;
    if (w < clock_) w = clock_;
    if (wakeups_.insert(w).second) {
      Ev ev;
      ev.at = w;
      ev.kind = EvKind::Wakeup;
      push(std::move(ev));
    }
  }

  void on_dev_recv(int dev, const Message& m) {
    SimDevice& d = devs_[static_cast<std::size_t>(dev)];
    if (!d.connected) return;
    if (m.type == MsgType::Dispatch) {
      json p = json::parse(m.payload, nullptr, false);
      if (p.is_object()) d.received_at[p.value("task", "")] = clock_;
    }
    for (const auto& r : d.core->on_message(m)) from_device(dev, r);
    if (!d.running && d.core->has_ready()) {
      Ev ev;
      ev.at = clock_;
      ev.kind = EvKind::StartCheck;
      ev.dev = dev;
      push(std::move(ev));
    }
  }

  void on_start_check(int dev) {
    SimDevice& d = devs_[static_cast<std::size_t>(dev)];
    if (d.running || !d.core->has_ready()) return;
    auto w = d.core->start_next();
    if (!w) return;
    Ms received = clock_;
    auto it = d.received_at.find(w->task_id);
    if (it != d.received_at.end()) received = it->second;
    Ms wake = static_cast<Ms>(draw_wake(cfg_.fleet.sleep, d.rng_sleep));
    Ms exec = static_cast<Ms>(draw_exec(cfg_.fleet.exec, d.exec_factor, d.rng_exec));
    d.running = RunningTask{*w, received, clock_ + wake};
    Ev ev;
    ev.at = clock_ + wake + exec;
    ev.kind = EvKind::Finish;
    ev.dev = dev;
    ev.task = w->task_id;
    push(std::move(ev));
  }

  void on_finish(int dev, const std::string& task) {
    SimDevice& d = devs_[static_cast<std::size_t>(dev)];
    if (!d.running || d.running->work.task_id != task) return;
    RunningTask r = std::move(*d.running);
    d.running.reset();
    if (!d.core->is_canceled(r.work.task_id)) {
      ExecOutcome o = d.core->execute(r.work);
      Message res = d.core->make_result(r.work, o, clock_ - r.started, r.started - r.received);
      from_device(dev, res);
    }
    d.received_at.erase(r.work.task_id);
    if (d.core->has_ready()) {
      Ev ev;
      ev.at = clock_;
      ev.kind = EvKind::StartCheck;
      ev.dev = dev;
      push(std::move(ev));
    }
  }

  void on_churn(int dev) {
    SimDevice& d = devs_[static_cast<std::size_t>(dev)];
    const ChurnModel& ch = cfg_.fleet.churn;
    Ev next;
    next.kind = EvKind::Churn;
    next.dev = dev;
    if (d.connected) {
      d.connected = false;
      coord_.on_device_disconnect(d.id, clock_);
      next.at = clock_ + exp_ms(d.rng_churn, ch.mean_down_ms);
    } else {
      d.connected = true;
      to_coord(dev, d.core->make_register());
      for (const auto& m : d.outbox) to_coord(dev, m);
      d.outbox.clear();
      next.at = clock_ + exp_ms(d.rng_churn, ch.mean_up_ms);
    }
    push(std::move(next));
  }

  void process(const Ev& ev) {
    switch (ev.kind) {
      case EvKind::Boot: {
        SimDevice& d = devs_[static_cast<std::size_t>(ev.dev)];
        to_coord(ev.dev, d.core->make_register());
        Ev hb;
        hb.at = clock_ + cfg_.heartbeat_interval_ms;
        hb.kind = EvKind::Heartbeat;
        hb.dev = ev.dev;
        push(std::move(hb));
        if (cfg_.fleet.churn.enabled) {
          Ev c;
          c.at = clock_ + exp_ms(d.rng_churn, cfg_.fleet.churn.mean_up_ms);
          c.kind = EvKind::Churn;
          c.dev = ev.dev;
          push(std::move(c));
        }
        break;
      }
      case EvKind::Heartbeat: {
        SimDevice& d = devs_[static_cast<std::size_t>(ev.dev)];
        if (d.connected) to_coord(ev.dev, d.core->make_heartbeat());
        Ev hb;
        hb.at = clock_ + cfg_.heartbeat_interval_ms;
        hb.kind = EvKind::Heartbeat;
        hb.dev = ev.dev;
        push(std::move(hb));
        break;
      }
      case EvKind::Churn:
        on_churn(ev.dev);
        break;
      case EvKind::DevRecv:
        on_dev_recv(ev.dev, ev.msg);
        break;
      case EvKind::CoordRecv: {
        if (ev.msg.type == MsgType::Register) ++registered_;
        route(coord_.on_device_message(devs_[static_cast<std::size_t>(ev.dev)].id, ev.msg,
                                       clock_));
        ensure_wakeup();
        break;
      }
      case EvKind::StartCheck:
        on_start_check(ev.dev);
        break;
      case EvKind::Finish:
        on_finish(ev.dev, ev.task);
        break;
      case EvKind::Wakeup: {
        wakeups_.erase(ev.at);
        route(coord_.on_wakeup(clock_));
        ensure_wakeup();
        break;
      }
    }
  }

  CampaignConfig cfg_;
  Coordinator coord_;
  std::vector<SimDevice> devs_;
  std::map<std::string, int> index_;
  std::priority_queue<Ev, std::vector<Ev>, EvLater> heap_;
  std::set<Ms> wakeups_;
  std::uint64_t seq_ = 0;
  Ms clock_ = 0;
  int registered_ = 0;
  std::int64_t wire_bytes_ = 0;
  std::vector<std::vector<double>> fl_x_;
  std::vector<double> fl_y_;
};

// --- reports -----------------------------------------------------------------

std::string render_per_query_csv(const std::vector<QueryStat>& stats) {
  std::string out =
      "idx,query,status,delay_ms,dispatched,target,returned_ok,redundancy,"
      "violations,errors,starved_rounds,net_ms_mean,exec_ms_mean,blocking_ms_mean\n";
  for (const auto& s : stats) {
    out += std::to_string(s.idx) + "," + s.id + "," + s.status + "," +
           std::to_string(s.delay_ms) + "," + std::to_string(s.dispatched) + "," +
           std::to_string(s.target) + "," + std::to_string(s.returned_ok) + "," +
           fmt_fixed(s.redundancy, 4) + "," + std::to_string(s.violations) + "," +
           std::to_string(s.errors) + "," + std::to_string(s.starved_rounds) + "," +
           fmt_fixed(s.net_ms_mean, 2) + "," + fmt_fixed(s.exec_ms_mean, 2) + "," +
           fmt_fixed(s.blocking_ms_mean, 2) + "\n";
  }
  return out;
}

std::string render_histogram_csv(const std::vector<QueryStat>& stats, Ms timeout_ms) {
  constexpr int kBins = 50;
  Ms width = timeout_ms / kBins;
  if (width < 1) width = 1;
  std::vector<std::int64_t> counts(kBins, 0);
  for (const auto& s : stats) {
    Ms b = s.delay_ms / width;
    if (b > kBins - 1) b = kBins - 1;
    if (b < 0) b = 0;
    ++counts[static_cast<std::size_t>(b)];
  }
  std::string out = "bin_start_ms,bin_end_ms,count\n";
  for (int b = 0; b < kBins; ++b)
    out += std::to_string(static_cast<Ms>(b) * width) + "," +
           std::to_string(static_cast<Ms>(b + 1) * width) + "," +
           std::to_string(counts[static_cast<std::size_t>(b)]) + "\n";
  return out;
}

std::string render_summary(const CampaignConfig& cfg, const CampaignReport& r) {
  std::string s = "{";
  s += "\"artifact_bytes\":" + std::to_string(r.artifact_bytes);
  s += ",\"completed\":" + std::to_string(r.completed);
  s += ",\"completion_rate\":\"" + fmt_fixed(r.completion_rate, 4) + "\"";
  s += ",\"eta\":\"" + fmt_fixed(cfg.eta, 2) + "\"";
  s += ",\"mean_delay_ms\":\"" + fmt_fixed(r.mean_delay_ms, 2) + "\"";
  s += ",\"mean_redundancy\":\"" + fmt_fixed(r.mean_redundancy, 4) + "\"";
  s += ",\"p50_delay_ms\":" + std::to_string(r.p50_delay_ms);
  s += ",\"p90_delay_ms\":" + std::to_string(r.p90_delay_ms);
  s += ",\"p99_delay_ms\":" + std::to_string(r.p99_delay_ms);
  s += ",\"policy\":\"" + std::string(policy_name(cfg.policy)) + "\"";
  s += ",\"quantum_used\":" + std::to_string(r.quantum_used);
  s += ",\"queries\":" + std::to_string(cfg.queries);
  s += ",\"seed\":" + std::to_string(cfg.seed);
  s += ",\"starved_rounds\":" + std::to_string(r.starved_rounds);
  s += ",\"static_checks\":" + std::to_string(r.static_checks);
  s += ",\"verdict_cache_hits\":" + std::to_string(r.verdict_cache_hits);
  s += ",\"wire_bytes\":" + std::to_string(r.wire_bytes);
  s += ",\"z\":" + std::to_string(cfg.z);
  s += "}";
  return s;
}

}  // namespace

// --- config ------------------------------------------------------------------

static NetModel net_from(const json& j) {
  NetModel n;
  n.median_ms = j.value("median_ms", n.median_ms);
  n.sigma = j.value("sigma", n.sigma);
  n.device_spread = j.value("device_spread", n.device_spread);
  n.diurnal = j.value("diurnal", n.diurnal);
  n.diurnal_low = j.value("diurnal_low", n.diurnal_low);
  n.diurnal_high = j.value("diurnal_high", n.diurnal_high);
  return n;
}

static ExecModel exec_from(const json& j) {
  ExecModel e;
  e.median_ms = j.value("median_ms", e.median_ms);
  e.sigma = j.value("sigma", e.sigma);
  e.device_spread = j.value("device_spread", e.device_spread);
  return e;
}

static SleepModel sleep_from(const json& j) {
  SleepModel s;
  s.prob = j.value("prob", s.prob);
  s.wake_min_ms = j.value("wake_min_ms", s.wake_min_ms);
  s.wake_max_ms = j.value("wake_max_ms", s.wake_max_ms);
  return s;
}

static ChurnModel churn_from(const json& j) {
  ChurnModel c;
  c.enabled = j.value("enabled", c.enabled);
  c.mean_up_ms = j.value("mean_up_ms", c.mean_up_ms);
  c.mean_down_ms = j.value("mean_down_ms", c.mean_down_ms);
  return c;
}

static DataModel data_from(const json& j) {
  DataModel d;
  d.name = j.value("name", d.name);
  d.rows_per_device = j.value("rows_per_device", d.rows_per_device);
  d.fl_name = j.value("fl_name", d.fl_name);
  d.fl_dim = j.value("fl_dim", d.fl_dim);
  d.fl_rows_per_device = j.value("fl_rows_per_device", d.fl_rows_per_device);
  d.noniid = j.value("noniid", d.noniid);
  return d;
}

CampaignConfig campaign_from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error("BadConfig", "campaign config must be a JSON object");
  CampaignConfig c;
  if (j.contains("fleet")) {
    const json& f = j["fleet"];
    if (!f.is_object()) throw Error("BadConfig", "fleet must be an object");
    c.fleet.devices = f.value("devices", c.fleet.devices);
    if (f.contains("net")) c.fleet.net = net_from(f["net"]);
    if (f.contains("exec")) c.fleet.exec = exec_from(f["exec"]);
    if (f.contains("sleep")) c.fleet.sleep = sleep_from(f["sleep"]);
    if (f.contains("churn")) c.fleet.churn = churn_from(f["churn"]);
    if (f.contains("data")) c.fleet.data = data_from(f["data"]);
  }
  c.z = j.value("z", c.z);
  if (j.contains("policy")) c.policy = policy_from_name(j["policy"].get<std::string>());
  c.once_redundancy = j.value("once_redundancy", c.once_redundancy);
  c.eta = j.value("eta", c.eta);
  c.k_max = j.value("k_max", c.k_max);
  c.queries = j.value("queries", c.queries);
  c.seed = j.value("seed", c.seed);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.wakeup_interval_ms = j.value("wakeup_interval_ms", c.wakeup_interval_ms);
  c.incre_interval_ms = j.value("incre_interval_ms", c.incre_interval_ms);
  c.fl_wakeup_interval_ms = j.value("fl_wakeup_interval_ms", c.fl_wakeup_interval_ms);
  c.gap_ms = j.value("gap_ms", c.gap_ms);
  c.heartbeat_interval_ms = j.value("heartbeat_interval_ms", c.heartbeat_interval_ms);
  c.min_devices = j.value("min_devices", c.min_devices);
  if (j.contains("manifest")) c.manifest_text = j["manifest"].dump();
  c.fl_rounds = j.value("fl_rounds", c.fl_rounds);
  c.fl_lr = j.value("fl_lr", c.fl_lr);
  c.fl_epochs = j.value("fl_epochs", c.fl_epochs);
  return c;
}

std::string campaign_to_json_text(const CampaignConfig& c) {
  json f;
  f["devices"] = c.fleet.devices;
  f["net"] = {{"median_ms", c.fleet.net.median_ms},
              {"sigma", c.fleet.net.sigma},
              {"device_spread", c.fleet.net.device_spread},
              {"diurnal", c.fleet.net.diurnal},
              {"diurnal_low", c.fleet.net.diurnal_low},
              {"diurnal_high", c.fleet.net.diurnal_high}};
  f["exec"] = {{"median_ms", c.fleet.exec.median_ms},
               {"sigma", c.fleet.exec.sigma},
               {"device_spread", c.fleet.exec.device_spread}};
  f["sleep"] = {{"prob", c.fleet.sleep.prob},
                {"wake_min_ms", c.fleet.sleep.wake_min_ms},
                {"wake_max_ms", c.fleet.sleep.wake_max_ms}};
  f["churn"] = {{"enabled", c.fleet.churn.enabled},
                {"mean_up_ms", c.fleet.churn.mean_up_ms},
                {"mean_down_ms", c.fleet.churn.mean_down_ms}};
  f["data"] = {{"name", c.fleet.data.name},
               {"rows_per_device", c.fleet.data.rows_per_device},
               {"fl_name", c.fleet.data.fl_name},
               {"fl_dim", c.fleet.data.fl_dim},
               {"fl_rows_per_device", c.fleet.data.fl_rows_per_device},
               {"noniid", c.fleet.data.noniid}};
  json j;
  j["fleet"] = f;
  j["z"] = c.z;
  j["policy"] = policy_name(c.policy);
  j["once_redundancy"] = c.once_redundancy;
  j["eta"] = c.eta;
  j["k_max"] = c.k_max;
  j["queries"] = c.queries;
  j["seed"] = c.seed;
  j["timeout_ms"] = c.timeout_ms;
  j["wakeup_interval_ms"] = c.wakeup_interval_ms;
  j["incre_interval_ms"] = c.incre_interval_ms;
  j["fl_wakeup_interval_ms"] = c.fl_wakeup_interval_ms;
  j["gap_ms"] = c.gap_ms;
  j["heartbeat_interval_ms"] = c.heartbeat_interval_ms;
  j["min_devices"] = c.min_devices;
  if (!c.manifest_text.empty()) j["manifest"] = json::parse(c.manifest_text);
  j["fl_rounds"] = c.fl_rounds;
  j["fl_lr"] = c.fl_lr;
  j["fl_epochs"] = c.fl_epochs;
  return j.dump(2);
}

std::string default_manifest_text(const DataModel& data, int z) {
  json m;
  m["declared"] = json::array({data.name});
  m["params"] = json::object();
  json pipe;
  pipe["source"] = {{"kind", "literal"}, {"name", data.name}};
  pipe["stages"] = json::array({json{
      {"op", "filter"},
      {"expr", json{{"cmp", ">="}, {"args", json::array({json{{"col", "value"}},
                                                         json{{"lit", 0.0}}})}}}}});
  pipe["local_agg"] = {{"kind", "count"}};
  pipe["final_agg"] = {{"kind", "count"}};
  m["pipeline"] = pipe;
  m["target"] = z;
  return m.dump();
}

static std::string fl_manifest_text(const CampaignConfig& cfg, const std::vector<double>& w) {
  json m;
  m["declared"] = json::array({cfg.fleet.data.fl_name});
  json params;
  params["fl_model"] = json(w).dump();
  params["fl_lr"] = cfg.fl_lr;
  params["fl_epochs"] = cfg.fl_epochs;
  m["params"] = params;
  json pipe;
  pipe["source"] = {{"kind", "literal"}, {"name", cfg.fleet.data.fl_name}};
  pipe["stages"] = json::array();
  pipe["local_agg"] = {{"dim", cfg.fleet.data.fl_dim}, {"kind", "fedavg"}};
  pipe["final_agg"] = {{"kind", "fedavg"}};
  m["pipeline"] = pipe;
  m["target"] = cfg.z;
  return m.dump();
}

Ms percentile_nearest_rank(std::vector<Ms> xs, double q) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(xs.size())));
  if (rank < 1) rank = 1;
  if (rank > xs.size()) rank = xs.size();
  return xs[rank - 1];
}

CampaignReport run_campaign(const CampaignConfig& cfg) {
  validate_campaign(cfg);
  FleetSim sim(cfg);
  sim.start();
  const std::string manifest = cfg.manifest_text.empty()
                                   ? default_manifest_text(cfg.fleet.data, cfg.z)
                                   : cfg.manifest_text;
  CampaignReport rep;
  Ms next_at = sim.clock() + cfg.gap_ms;
  for (int i = 0; i < cfg.queries; ++i) {
    Message reply = sim.submit(manifest, next_at);
    if (reply.type != MsgType::SubmitOk)
      throw Error("SubmitRejected", "campaign query rejected: " + reply.payload);
    std::string qid = json::parse(reply.payload)["query"].get<std::string>();
    sim.run_query_to_end(qid);
    const QueryRecord* q = sim.coord().query(qid);
    QueryMetrics mets = sim.coord().metrics(qid);
    QueryStat st;
    st.idx = i;
    st.id = qid;
    st.status = q->status;
    st.delay_ms = mets.delay_ms;
    st.dispatched = q->task.dispatched();
    st.target = q->z;
    st.returned_ok = q->task.returned_ok();
    st.violations = q->violations;
    st.errors = q->errors;
    st.starved_rounds = q->starved_rounds;
    st.redundancy = mets.redundancy;
    st.net_ms_mean = mets.net_ms_mean;
    st.exec_ms_mean = mets.exec_ms_mean;
    st.blocking_ms_mean = mets.blocking_ms_mean;
    rep.per_query.push_back(st);
    next_at = sim.clock() + cfg.gap_ms;
  }

  std::vector<Ms> delays;
  double delay_sum = 0.0, red_sum = 0.0;
  for (const auto& s : rep.per_query) {
    delays.push_back(s.delay_ms);
    delay_sum += static_cast<double>(s.delay_ms);
    red_sum += s.redundancy;
    if (s.status == "complete") ++rep.completed;
    rep.starved_rounds += s.starved_rounds;
  }
  if (!rep.per_query.empty()) {
    auto n = static_cast<double>(rep.per_query.size());
    rep.completion_rate = static_cast<double>(rep.completed) / n;
    rep.mean_delay_ms = delay_sum / n;
    rep.mean_redundancy = red_sum / n;
    rep.p50_delay_ms = percentile_nearest_rank(delays, 0.50);
    rep.p90_delay_ms = percentile_nearest_rank(delays, 0.90);
    rep.p99_delay_ms = percentile_nearest_rank(delays, 0.99);
  }
  rep.artifact_bytes = sim.coord().artifact_bytes_sent();
  rep.wire_bytes = sim.wire_bytes();
  if (const UserAccount* a = sim.coord().accounts().find(kSimUser))
    rep.quantum_used = a->quantum_used;
  rep.static_checks = sim.coord().static_checks_run();
  rep.verdict_cache_hits = sim.coord().verdict_cache_hits();
  rep.per_query_csv = render_per_query_csv(rep.per_query);
  rep.summary_text = render_summary(cfg, rep);
  rep.histogram_csv = render_histogram_csv(rep.per_query, cfg.timeout_ms);
  return rep;
}

FlReport run_fl_campaign(const CampaignConfig& cfg) {
  if (cfg.fleet.data.fl_dim < 1)
    throw Error("BadConfig", "model training needs fleet.data.fl_dim >= 1");
  if (cfg.fl_rounds < 1) throw Error("BadConfig", "fl_rounds must be >= 1");
  validate_campaign(cfg);
  FleetSim sim(cfg);
  sim.start();
  std::vector<double> w(static_cast<std::size_t>(cfg.fleet.data.fl_dim), 0.0);
  FlReport rep;
  rep.initial_loss = sim.pooled_loss(w);
  rep.csv = "round,loss,clock_ms,delay_ms,redundancy\n";
  Ms next_at = sim.clock() + cfg.gap_ms;
  for (int r = 1; r <= cfg.fl_rounds; ++r) {
    Message reply = sim.submit(fl_manifest_text(cfg, w), next_at);
    if (reply.type != MsgType::SubmitOk)
      throw Error("SubmitRejected", "training round rejected: " + reply.payload);
    std::string qid = json::parse(reply.payload)["query"].get<std::string>();
    std::string status = sim.run_query_to_end(qid);
    const QueryRecord* q = sim.coord().query(qid);
    if (status == "complete") {
      json doc = json::parse(sim.fetch(qid).payload);
      w = doc["value"].get<std::vector<double>>();
    }
    FlRound fr;
    fr.round = r;
    fr.loss = sim.pooled_loss(w);
    fr.clock_ms = sim.clock();
    fr.delay_ms = q->delay_ms();
    fr.redundancy = q->redundancy();
    rep.rounds.push_back(fr);
    rep.csv += std::to_string(fr.round) + "," + fmt_fixed(fr.loss, 6) + "," +
               std::to_string(fr.clock_ms) + "," + std::to_string(fr.delay_ms) + "," +
               fmt_fixed(fr.redundancy, 4) + "\n";
    next_at = sim.clock() + cfg.gap_ms;
  }
  rep.model = std::move(w);
  rep.total_ms = sim.clock();
  rep.artifact_bytes = sim.coord().artifact_bytes_sent();
  return rep;
}

std::string fleet_digest(const FleetConfig& f, std::uint64_t seed) {
  std::string acc;
  std::vector<double> w;
  if (f.data.fl_dim > 0) w = true_weights(seed, f.data.fl_dim);
  for (int i = 0; i < f.devices; ++i) {
    Profile p = profile_for(f, seed, i);
    acc += device_name(i) + "|" + fmt_fixed(p.net_factor, 9) + "|" +
           fmt_fixed(p.exec_factor, 9) + "\n";
    Rng data_rng(seed_for(seed, "data", static_cast<std::uint64_t>(i)));
    acc += table_to_csv(usage_table(f.data, data_rng));
    if (f.data.fl_dim > 0) acc += table_to_csv(fl_table(f.data, seed, i, w, data_rng));
  }
  return sha256_hex(acc);
}

double response_shape(const FleetConfig& f, std::uint64_t seed, int samples) {
  if (samples < 1 || f.devices < 1) throw Error("BadConfig", "shape needs samples and devices");
  Rng r(seed_for(seed, "shape", 0));
  std::vector<double> xs;
  xs.reserve(static_cast<std::size_t>(samples));
  double sum = 0.0;
  for (int i = 0; i < samples; ++i) {
    int dev = static_cast<int>(r.below(static_cast<std::uint64_t>(f.devices)));
    Profile p = profile_for(f, seed, dev);
    double x = draw_net(f.net, p.net_factor, 1.0, r) + draw_net(f.net, p.net_factor, 1.0, r) +
               draw_wake(f.sleep, r) + draw_exec(f.exec, p.exec_factor, r);
    xs.push_back(x);
    sum += x;
  }
  std::sort(xs.begin(), xs.end());
  auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(samples)));
  if (rank < 1) rank = 1;
  if (rank > xs.size()) rank = xs.size();
  double p99 = xs[rank - 1];
  double mean = sum / static_cast<double>(samples);
  return mean > 0.0 ? p99 / mean : 0.0;
}

}  // namespace fq
