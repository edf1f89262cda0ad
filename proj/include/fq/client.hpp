#pragma once
// Client-side library behind the command-line tool: a framed TCP session to
// the coordinator, local manifest validation before anything touches the
// wire, a blocking fetch loop, and the iterative model-training driver.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fq/net.hpp"
#include "fq/wire.hpp"

namespace fq {

// The environment variable naming the credential file (first line holds
// "user:secret"). The secret is read, used, and never logged or echoed.
constexpr const char* kCredentialEnv = "FQ_CREDENTIAL";

// Throws Error("NoCredential") when the variable is unset or the file is
// unreadable/empty. Error text never contains the credential itself.
std::string load_credential();

// Parses and re-serializes a manifest so malformed documents fail locally,
// and what goes on the wire is the canonical form the server would produce.
std::string canonicalize_manifest(const std::string& manifest_text);

struct ClientConfig {
  std::string host = "127.0.0.1";
  int port = 4460;
  int io_timeout_ms = 15000;  // per round-trip
};

class Client {
public:
  explicit Client(const ClientConfig& cfg);  // connects eagerly

  // One request/reply round trip.
  Message call(const Message& m);

  // Local validation first; returns SUBMIT_OK or REJECT.
  Message submit(const std::string& manifest_text, const std::string& credential);
  Message status(const std::string& query_id);
  // Polls until the result document is ready (RESULT_DOC), the query reaches
  // a terminal non-complete state (the server's reply is returned as-is), or
  // `timeout_ms` elapses (nullopt).
  std::optional<Message> fetch(const std::string& query_id, Ms timeout_ms,
                               Ms poll_ms = 300);
  Message debug(const std::string& manifest_text, const std::string& credential,
                int devices, std::uint64_t seed);
  Message cancel(const std::string& query_id, const std::string& credential);

private:
  ClientConfig cfg_;
  Conn conn_;
};

// Spec for the iterative training loop, loadable from a JSON document:
// {"dataset": ..., "dim": N, "model": [...], "lr": ..., "epochs": N,
//  "target": Z}. Missing model starts from zeros.
struct FlRunSpec {
  std::string dataset = "fl_train";
  int dim = 0;
  std::vector<double> model;
  double lr = 0.1;
  int epochs = 1;
  int target = 50;
};

FlRunSpec fl_spec_from_json(const std::string& text);
std::string fl_spec_to_json(const FlRunSpec& s);
// The per-round manifest: a model-averaging pipeline over spec.dataset with
// the current weights riding in the dispatch parameters.
std::string fl_manifest_from_spec(const FlRunSpec& s);

struct FlRunResult {
  bool ok = false;
  std::string fail_code;  // "" on success; Reject code or Timeout/NetFail
  int rounds_done = 0;
  std::vector<double> model;
  std::vector<std::string> query_ids;
};

// submit -> fetch -> update, `rounds` times; stops early on rejection or a
// round that exceeds round_timeout_ms.
FlRunResult fl_run(Client& client, const std::string& credential, FlRunSpec spec,
                   int rounds, Ms round_timeout_ms);

}  // namespace fq
