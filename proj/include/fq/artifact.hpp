#pragma once
// Query manifests (what clients submit) and artifacts (what devices run).
//
// An artifact is the canonical serialized form of an instrumented pipeline
// plus the enforcement sets the device sandbox needs: declared datasets, the
// builtin blacklist, and the user's granted restricted builtins.  Its hash
// (SHA-256 of the canonical bytes) is the cache key on devices and the unit
// of "same query class" for response-time distributions.

#include <string>
#include <vector>

#include "fq/expr.hpp"
#include "fq/pipeline.hpp"

namespace fq {

struct QueryManifest {
  Pipeline pipeline;
  std::vector<std::string> declared;  // dataset names the query may touch
  int target = 0;                     // Z: results required before release
  ParamMap params;
  double eta = -1.0;               // scheduler knob override; < 0 = server default
  std::string source_schema_json;  // schema for Computed sources; "" when unused
};

QueryManifest parse_manifest_text(const std::string& text);
std::string manifest_to_text(const QueryManifest& m);  // canonical

std::string params_to_text(const ParamMap& params);
ParamMap params_from_text(const std::string& text);

struct Artifact {
  std::string pipeline_text;  // canonical instrumented pipeline
  std::vector<std::string> declared;
  std::vector<std::string> blacklist;
  std::vector<std::string> restricted;  // restricted builtins granted to the user
};

std::string artifact_to_text(const Artifact& a);  // canonical; hash these bytes
Artifact artifact_from_text(const std::string& text);
std::string artifact_hash(const std::string& canonical_text);

// Key for the coordinator's static-check verdict cache: covers everything the
// verdict depends on — manifest content, the user's grants, and the policy
// inputs (blacklist, minimum device count).
std::string submission_fingerprint(const std::string& manifest_text,
                                   const std::vector<std::string>& granted_datasets,
                                   const std::vector<std::string>& granted_restricted,
                                   const std::vector<std::string>& blacklist,
                                   int min_devices);

}  // namespace fq
