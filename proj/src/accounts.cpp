#include "fq/accounts.hpp"

#include "json.hpp"

using nlohmann::json;

namespace fq {

PolicyFile parse_policy_file(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error("BadPolicyFile", "policy file must be a JSON object");
  PolicyFile pf;
  if (j.contains("blacklist"))
    for (const auto& e : j["blacklist"]) pf.blacklist.insert(e.get<std::string>());
  if (j.contains("grants")) {
    for (const auto& [user, spec] : j["grants"].items()) {
      UserAccount a;
      a.user = user;
      if (spec.contains("secret")) a.secret = spec["secret"].get<std::string>();
      if (spec.contains("datasets"))
        for (const auto& d : spec["datasets"]) a.grants.datasets.insert(d.get<std::string>());
      if (spec.contains("restricted"))
        for (const auto& r : spec["restricted"]) a.grants.restricted.insert(r.get<std::string>());
      if (spec.contains("quantum_limit"))
        a.quantum_limit = spec["quantum_limit"].get<std::int64_t>();
      pf.users[user] = std::move(a);
    }
  }
  return pf;
}

const UserAccount* AccountStore::authenticate(const std::string& credential) const {
  auto colon = credential.find(':');
  if (colon == std::string::npos) return nullptr;
  std::string user = credential.substr(0, colon);
  std::string secret = credential.substr(colon + 1);
  auto it = users_.find(user);
  if (it == users_.end() || it->second.secret != secret) return nullptr;
  return &it->second;
}

UserAccount* AccountStore::find(const std::string& user) {
  auto it = users_.find(user);
  return it == users_.end() ? nullptr : &it->second;
}

const UserAccount* AccountStore::find(const std::string& user) const {
  auto it = users_.find(user);
  return it == users_.end() ? nullptr : &it->second;
}

void AccountStore::maybe_rollover(const std::string& user, Ms now) {
  UserAccount* a = find(user);
  if (!a || period_ms_ <= 0) return;
  while (now - a->period_anchor >= period_ms_) {
    a->period_anchor += period_ms_;
    a->quantum_used = 0;
  }
}

bool AccountStore::admits(const std::string& user, int z, Ms now) {
  maybe_rollover(user, now);
  const UserAccount* a = find(user);
  if (!a) return false;
  return a->quantum_used + z <= a->quantum_limit;
}

void AccountStore::debit(const std::string& user, int devices) {
  if (UserAccount* a = find(user)) a->quantum_used += devices;
}

std::vector<std::string> AccountStore::users() const {
  std::vector<std::string> out;
  for (const auto& [name, acct] : users_) out.push_back(name);
  return out;
}

}  // namespace fq
