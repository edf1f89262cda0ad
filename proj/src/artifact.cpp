#include "fq/artifact.hpp"

#include <algorithm>

#include "json.hpp"

using nlohmann::json;

namespace fq {

namespace {

json value_to_json(const Value& v) {
  switch (v.type()) {
    case Type::Int: return std::get<std::int64_t>(v.v);
    case Type::Float: return std::get<double>(v.v);
    case Type::Str: return std::get<std::string>(v.v);
    case Type::Bool: return std::get<bool>(v.v);
  }
  throw Error("BadValue", "unreachable value type");
}

Value value_from_json(const json& j) {
  if (j.is_number_integer()) return Value{j.get<std::int64_t>()};
  if (j.is_number_float()) return Value{j.get<double>()};
  if (j.is_string()) return Value{j.get<std::string>()};
  if (j.is_boolean()) return Value{j.get<bool>()};
  throw Error("BadManifest", "parameter values must be scalars");
}

std::vector<std::string> string_list(const json& j, const char* what) {
  if (!j.is_array()) throw Error("BadManifest", std::string(what) + " must be an array");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw Error("BadManifest", std::string(what) + " entries must be strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

json sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return json(v);
}

}  // namespace

std::string params_to_text(const ParamMap& params) {
  json j = json::object();
  for (const auto& [name, value] : params) j[name] = value_to_json(value);
  return j.dump();
}

ParamMap params_from_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("BadManifest", "params must be an object");
  ParamMap out;
  for (const auto& [name, value] : j.items()) out.emplace(name, value_from_json(value));
  return out;
}

QueryManifest parse_manifest_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("BadManifest", "manifest must be a JSON object");
  if (!j.contains("pipeline")) throw Error("BadManifest", "manifest missing pipeline");
  QueryManifest m;
  m.pipeline = parse_pipeline_text(j["pipeline"].dump());
  if (j.contains("declared")) m.declared = string_list(j["declared"], "declared");
  if (j.contains("target")) {
    if (!j["target"].is_number_integer()) throw Error("BadManifest", "target must be an integer");
    m.target = j["target"].get<int>();
  }
  if (j.contains("params")) m.params = params_from_text(j["params"].dump());
  if (j.contains("eta")) {
    if (!j["eta"].is_number()) throw Error("BadManifest", "eta must be a number");
    m.eta = j["eta"].get<double>();
  }
  if (j.contains("source_schema")) m.source_schema_json = j["source_schema"].dump();
  return m;
}

std::string manifest_to_text(const QueryManifest& m) {
  json j;
  j["declared"] = sorted_unique(m.declared);
  if (m.eta >= 0) j["eta"] = m.eta;
  j["params"] = json::parse(params_to_text(m.params));
  j["pipeline"] = json::parse(pipeline_to_text(m.pipeline));
  if (!m.source_schema_json.empty()) j["source_schema"] = json::parse(m.source_schema_json);
  j["target"] = m.target;
  return j.dump();
}

std::string artifact_to_text(const Artifact& a) {
  json j;
  j["blacklist"] = sorted_unique(a.blacklist);
  j["declared"] = sorted_unique(a.declared);
  j["pipeline"] = json::parse(a.pipeline_text);
  j["restricted"] = sorted_unique(a.restricted);
  j["v"] = 1;
  return j.dump();
}

Artifact artifact_from_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("BadArtifact", "artifact must be a JSON object");
  Artifact a;
  if (!j.contains("pipeline")) throw Error("BadArtifact", "artifact missing pipeline");
  a.pipeline_text = j["pipeline"].dump();
  if (j.contains("declared")) a.declared = string_list(j["declared"], "declared");
  if (j.contains("blacklist")) a.blacklist = string_list(j["blacklist"], "blacklist");
  if (j.contains("restricted")) a.restricted = string_list(j["restricted"], "restricted");
  return a;
}

std::string artifact_hash(const std::string& canonical_text) {
  return sha256_hex(canonical_text);
}

std::string submission_fingerprint(const std::string& manifest_text,
                                   const std::vector<std::string>& granted_datasets,
                                   const std::vector<std::string>& granted_restricted,
                                   const std::vector<std::string>& blacklist,
                                   int min_devices) {
  json j;
  j["blacklist"] = sorted_unique(blacklist);
  j["grants_datasets"] = sorted_unique(granted_datasets);
  j["grants_restricted"] = sorted_unique(granted_restricted);
  j["manifest"] = json::parse(manifest_text);
  j["min_devices"] = min_devices;
  return sha256_hex(j.dump());
}

}  // namespace fq
