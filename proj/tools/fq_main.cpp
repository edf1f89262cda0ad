// Command-line client: submit queries, poll status, fetch results, cancel,
// drive iterative model training, and run offline fleet campaigns. The
// credential comes from a file named by FQ_CREDENTIAL and is never printed.
//
// Exit codes: 0 success, 2 rejected/failed, 3 timed out, 4 transport failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fq/client.hpp"
#include "fq/sim.hpp"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void print_payload(const fq::Message& m) {
  json p = json::parse(m.payload, nullptr, false);
  if (p.is_discarded())
    std::cout << m.payload << "\n";
  else
    std::cout << p.dump(2) << "\n";
}

std::string payload_str(const fq::Message& m, const char* key, const std::string& dflt) {
  json p = json::parse(m.payload, nullptr, false);
  if (p.is_object() && p.contains(key) && p[key].is_string())
    return p[key].get<std::string>();
  return dflt;
}

void write_out(const std::string& path, const std::string& content) {
  fq::write_file(path, content);
  std::cout << "wrote " << path << "\n";
}

int cmd_submit(const fq::ClientConfig& cc, const std::string& manifest_path, int target,
               double eta, bool debug, int devices, std::uint64_t seed) {
  std::string text = fq::read_file(manifest_path);
  if (target > 0 || eta >= 0) {
    json j = json::parse(text);
    if (target > 0) j["target"] = target;
    if (eta >= 0) j["eta"] = eta;
    text = j.dump();
  }
  std::string credential = fq::load_credential();
  fq::Client client(cc);
  fq::Message reply = debug ? client.debug(text, credential, devices, seed)
                            : client.submit(text, credential);
  print_payload(reply);
  if (reply.type == fq::MsgType::SubmitOk || reply.type == fq::MsgType::DebugOk) return 0;
  return 2;
}

int cmd_status(const fq::ClientConfig& cc, const std::string& qid) {
  fq::Client client(cc);
  fq::Message reply = client.status(qid);
  print_payload(reply);
  return reply.type == fq::MsgType::StatusOk ? 0 : 2;
}

int cmd_fetch(const fq::ClientConfig& cc, const std::string& qid, int timeout_s) {
  fq::Client client(cc);
  auto reply = client.fetch(qid, static_cast<fq::Ms>(timeout_s) * 1000);
  if (!reply) {
    std::cout << "timed out waiting for " << qid << "\n";
    return 3;
  }
  print_payload(*reply);
  if (reply->type == fq::MsgType::ResultDoc) return 0;
  // Terminal non-complete replies: distinguish a query that ran out of time
  // from one that failed outright.
  return payload_str(*reply, "status", "") == "timed_out" ? 3 : 2;
}

int cmd_cancel(const fq::ClientConfig& cc, const std::string& qid) {
  std::string credential = fq::load_credential();
  fq::Client client(cc);
  fq::Message reply = client.cancel(qid, credential);
  print_payload(reply);
  return reply.type == fq::MsgType::Ack ? 0 : 2;
}

int cmd_fl_run(const fq::ClientConfig& cc, const std::string& model_path, int rounds,
               int target, const std::string& out_path, int round_timeout_s) {
  fq::FlRunSpec spec = fq::fl_spec_from_json(fq::read_file(model_path));
  if (target > 0) spec.target = target;
  std::string credential = fq::load_credential();
  fq::Client client(cc);
  fq::FlRunResult r =
      fq::fl_run(client, credential, spec, rounds, static_cast<fq::Ms>(round_timeout_s) * 1000);
  spec.model = r.model;
  std::string out_json = fq::fl_spec_to_json(spec);
  if (out_path.empty())
    std::cout << out_json << "\n";
  else
    write_out(out_path, out_json);
  std::cout << "rounds completed: " << r.rounds_done << "/" << rounds << "\n";
  if (r.ok) return 0;
  std::cout << "failed: " << r.fail_code << "\n";
  return r.fail_code == "Timeout" ? 3 : 2;
}

int cmd_campaign(const std::string& config_path, const std::string& out_dir) {
  fq::CampaignConfig cfg = fq::campaign_from_json_text(fq::read_file(config_path));
  fs::create_directories(out_dir);
  auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
  if (cfg.fl_rounds > 0) {
    fq::FlReport r = fq::run_fl_campaign(cfg);
    write_out(path("fl_rounds.csv"), r.csv);
    json model = json::array();
    for (double w : r.model) model.push_back(w);
    json doc = {{"initial_loss", r.initial_loss},
                {"final_loss", r.rounds.empty() ? r.initial_loss : r.rounds.back().loss},
                {"model", model},
                {"rounds", static_cast<int>(r.rounds.size())},
                {"total_ms", r.total_ms},
                {"artifact_bytes", r.artifact_bytes}};
    write_out(path("fl_model.json"), doc.dump(2) + "\n");
    std::cout << "initial loss " << r.initial_loss << ", final loss "
              << (r.rounds.empty() ? r.initial_loss : r.rounds.back().loss) << " after "
              << r.rounds.size() << " rounds\n";
  } else {
    fq::CampaignReport r = fq::run_campaign(cfg);
    write_out(path("per_query.csv"), r.per_query_csv);
    write_out(path("summary.json"), r.summary_text);
    write_out(path("histogram.csv"), r.histogram_csv);
    std::cout << r.summary_text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated analytics client"};
  app.require_subcommand(1);
  fq::ClientConfig cc;
  app.add_option("--host", cc.host, "coordinator address")->envname("FQ_HOST");
  app.add_option("--port", cc.port, "coordinator port")->envname("FQ_PORT");

  auto* submit = app.add_subcommand("submit", "validate a manifest and submit it");
  std::string manifest_path;
  int target = 0;
  double eta = -1.0;
  bool debug = false;
  int devices = 5;
  std::uint64_t seed = 1;
  submit->add_option("--manifest", manifest_path, "manifest JSON file")->required();
  submit->add_option("--target", target, "override the result target Z");
  submit->add_option("--eta", eta, "override the scheduler knob");
  submit->add_flag("--debug", debug, "run on synthetic server-side rows instead");
  submit->add_option("--devices", devices, "synthetic device count for --debug");
  submit->add_option("--seed", seed, "synthetic data seed for --debug");

  auto* status = app.add_subcommand("status", "show a query's progress");
  std::string status_id;
  status->add_option("id", status_id, "query id")->required();

  auto* fetch = app.add_subcommand("fetch", "wait for and print a result document");
  std::string fetch_id;
  int fetch_timeout_s = 120;
  fetch->add_option("id", fetch_id, "query id")->required();
  fetch->add_option("--timeout", fetch_timeout_s, "seconds to wait");

  auto* cancel = app.add_subcommand("cancel", "cancel a running query");
  std::string cancel_id;
  cancel->add_option("id", cancel_id, "query id")->required();

  auto* fl = app.add_subcommand("fl-run", "iterative model training rounds");
  std::string model_path, fl_out;
  int fl_rounds = 1, fl_target = 0, round_timeout_s = 120;
  fl->add_option("--model", model_path, "training spec JSON file")->required();
  fl->add_option("--rounds", fl_rounds, "number of rounds")->required();
  fl->add_option("--target", fl_target, "override the per-round target Z");
  fl->add_option("--out", fl_out, "write the final spec+model here");
  fl->add_option("--round-timeout", round_timeout_s, "seconds per round");

  auto* campaign = app.add_subcommand("campaign", "run an offline simulated fleet campaign");
  std::string campaign_config, out_dir = ".";
  campaign->add_option("--config", campaign_config, "campaign config JSON file")->required();
  campaign->add_option("--out-dir", out_dir, "directory for report files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (submit->parsed())
      return cmd_submit(cc, manifest_path, target, eta, debug, devices, seed);
    if (status->parsed()) return cmd_status(cc, status_id);
    if (fetch->parsed()) return cmd_fetch(cc, fetch_id, fetch_timeout_s);
    if (cancel->parsed()) return cmd_cancel(cc, cancel_id);
    if (fl->parsed()) return cmd_fl_run(cc, model_path, fl_rounds, fl_target, fl_out, round_timeout_s);
    if (campaign->parsed()) return cmd_campaign(campaign_config, out_dir);
    return 2;
  } catch (const fq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code == "NetFail" ? 4 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
