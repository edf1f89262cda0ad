#include "fq/agg.hpp"

#include "json.hpp"

namespace fq {

using nlohmann::json;

const char* agg_kind_name(AggKind k) {
  switch (k) {
    case AggKind::Count: return "count";
    case AggKind::Sum: return "sum";
    case AggKind::Mean: return "mean";
    case AggKind::Min: return "min";
    case AggKind::Max: return "max";
    case AggKind::GroupBy: return "groupby";
    case AggKind::FedAvg: return "fedavg";
  }
  return "?";
}

AggKind agg_kind_from_name(const std::string& s) {
  if (s == "count") return AggKind::Count;
  if (s == "sum") return AggKind::Sum;
  if (s == "mean") return AggKind::Mean;
  if (s == "min") return AggKind::Min;
  if (s == "max") return AggKind::Max;
  if (s == "groupby") return AggKind::GroupBy;
  if (s == "fedavg") return AggKind::FedAvg;
  throw Error("BadAgg", "unknown aggregate kind '" + s + "'");
}

Partial identity_partial(AggKind kind, bool int_domain, AggKind group_inner,
                         bool group_inner_int, size_t fedavg_dim) {
  Partial p;
  p.kind = kind;
  p.scalar.kind = kind;
  p.scalar.int_domain = int_domain;
  if (kind == AggKind::GroupBy) {
    p.group_inner = group_inner;
    p.scalar.kind = group_inner;
    p.scalar.int_domain = group_inner_int;
  }
  if (kind == AggKind::FedAvg) p.wmodel.assign(fedavg_dim, 0.0);
  return p;
}

static std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw Error("Overflow", "int64 sum overflow");
  return r;
}

static ScalarPartial merge_scalar(const ScalarPartial& a, const ScalarPartial& b) {
  if (a.kind != b.kind || a.int_domain != b.int_domain)
    throw Error("MergeMismatch", "combiner shapes differ");
  ScalarPartial r = a;
  switch (a.kind) {
    case AggKind::Count:
      r.n = checked_add(a.n, b.n);
      break;
    case AggKind::Sum:
      r.n = checked_add(a.n, b.n);
      if (a.int_domain) r.i_acc = checked_add(a.i_acc, b.i_acc);
      else r.f_acc = a.f_acc + b.f_acc;
      break;
    case AggKind::Mean:
      r.n = checked_add(a.n, b.n);
      r.f_acc = a.f_acc + b.f_acc;
      break;
    case AggKind::Min:
    case AggKind::Max: {
      r.n = checked_add(a.n, b.n);
      if (!b.has_extreme) break;
      if (!a.has_extreme) { r.has_extreme = true; r.extreme = b.extreme; break; }
      bool bwins;
      if (a.int_domain)
        bwins = a.kind == AggKind::Min ? b.extreme.as_int() < a.extreme.as_int()
                                       : b.extreme.as_int() > a.extreme.as_int();
      else
        bwins = a.kind == AggKind::Min ? b.extreme.as_float() < a.extreme.as_float()
                                       : b.extreme.as_float() > a.extreme.as_float();
      if (bwins) r.extreme = b.extreme;
      break;
    }
    default:
      throw Error("MergeMismatch", "nested combiner must be scalar");
  }
  return r;
}

Partial merge(const Partial& a, const Partial& b) {
  if (a.kind != b.kind) throw Error("MergeMismatch", "aggregate kinds differ");
  Partial r;
  r.kind = a.kind;
  switch (a.kind) {
    case AggKind::GroupBy: {
      if (a.group_inner != b.group_inner || a.scalar.int_domain != b.scalar.int_domain)
        throw Error("MergeMismatch", "group inner shapes differ");
      r.group_inner = a.group_inner;
      r.scalar = a.scalar;
      r.groups = a.groups;
      for (auto& [k, sp] : b.groups) {
        auto it = r.groups.find(k);
        if (it == r.groups.end()) r.groups.emplace(k, sp);
        else it->second = merge_scalar(it->second, sp);
      }
      break;
    }
    case AggKind::FedAvg: {
      if (a.wmodel.size() != b.wmodel.size())
        throw Error("MergeMismatch", "model dimensions differ");
      r.wsum = a.wsum + b.wsum;
      r.wmodel.resize(a.wmodel.size());
      for (size_t i = 0; i < a.wmodel.size(); i++)
        r.wmodel[i] = a.wmodel[i] + b.wmodel[i];
      break;
    }
    default:
      r.scalar = merge_scalar(a.scalar, b.scalar);
      break;
  }
  return r;
}

static json finalize_scalar(const ScalarPartial& s) {
  switch (s.kind) {
    case AggKind::Count:
      return s.n;
    case AggKind::Sum:
      if (s.int_domain) return s.i_acc;
      return s.f_acc;
    case AggKind::Mean:
      if (s.n == 0) return nullptr;
      return s.f_acc / static_cast<double>(s.n);
    case AggKind::Min:
    case AggKind::Max:
      if (!s.has_extreme) return nullptr;
      if (s.int_domain) return s.extreme.as_int();
      return s.extreme.as_float();
    default:
      throw Error("MergeMismatch", "nested combiner must be scalar");
  }
}

std::string finalize_text(const Partial& p) {
  json out;
  switch (p.kind) {
    case AggKind::GroupBy: {
      out = json::object();
      for (auto& [k, sp] : p.groups) out[k] = finalize_scalar(sp);
      break;
    }
    case AggKind::FedAvg: {
      out = json::array();
      for (double w : p.wmodel)
        out.push_back(p.wsum == 0.0 ? 0.0 : w / p.wsum);
      break;
    }
    default:
      out = finalize_scalar(p.scalar);
      break;
  }
  return out.dump();
}

std::vector<double> fl_round(
    const std::vector<std::pair<double, std::vector<double>>>& members) {
  if (members.empty()) throw Error("BadAgg", "fl_round with no members");
  size_t dim = members[0].second.size();
  Partial acc = identity_partial(AggKind::FedAvg, false, AggKind::Count, false, dim);
  for (auto& [w, m] : members) {
    Partial p = identity_partial(AggKind::FedAvg, false, AggKind::Count, false, dim);
    p.wsum = w;
    for (size_t i = 0; i < dim; i++) p.wmodel[i] = w * m[i];
    acc = merge(acc, p);
  }
  std::vector<double> out(dim);
  for (size_t i = 0; i < dim; i++)
    out[i] = acc.wsum == 0.0 ? 0.0 : acc.wmodel[i] / acc.wsum;
  return out;
}

// --- wire form -------------------------------------------------------------

static json scalar_to_json(const ScalarPartial& s) {
  json j{{"kind", agg_kind_name(s.kind)}, {"int", s.int_domain}, {"n", s.n}};
  if (s.kind == AggKind::Sum) {
    if (s.int_domain) j["isum"] = s.i_acc;
    else j["fsum"] = s.f_acc;
  } else if (s.kind == AggKind::Mean) {
    j["fsum"] = s.f_acc;
  } else if (s.kind == AggKind::Min || s.kind == AggKind::Max) {
    if (s.has_extreme) {
      if (s.int_domain) j["ext"] = s.extreme.as_int();
      else j["ext"] = s.extreme.as_float();
    }
  }
  return j;
}

static ScalarPartial scalar_from_json(const json& j) {
  ScalarPartial s;
  s.kind = agg_kind_from_name(j.at("kind").get<std::string>());
  s.int_domain = j.at("int").get<bool>();
  s.n = j.at("n").get<std::int64_t>();
  if (j.contains("isum")) s.i_acc = j["isum"].get<std::int64_t>();
  if (j.contains("fsum")) s.f_acc = j["fsum"].get<double>();
  if (j.contains("ext")) {
    s.has_extreme = true;
    if (s.int_domain) s.extreme = Value(j["ext"].get<std::int64_t>());
    else s.extreme = Value(j["ext"].get<double>());
  }
  return s;
}

std::string partial_to_text(const Partial& p) {
  json j{{"kind", agg_kind_name(p.kind)}};
  switch (p.kind) {
    case AggKind::GroupBy: {
      j["inner"] = scalar_to_json(p.scalar);  // carries shape for empty maps
      json g = json::object();
      for (auto& [k, sp] : p.groups) g[k] = scalar_to_json(sp);
      j["groups"] = g;
      break;
    }
    case AggKind::FedAvg:
      j["wsum"] = p.wsum;
      j["wmodel"] = p.wmodel;
      break;
    default:
      j["scalar"] = scalar_to_json(p.scalar);
      break;
  }
  return j.dump();
}

Partial partial_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw Error("BadAgg", std::string("partial parse failure: ") + ex.what());
  }
  Partial p;
  p.kind = agg_kind_from_name(j.at("kind").get<std::string>());
  if (p.kind == AggKind::GroupBy) {
    p.scalar = scalar_from_json(j.at("inner"));
    p.group_inner = p.scalar.kind;
    for (auto& [k, v] : j.at("groups").items()) p.groups[k] = scalar_from_json(v);
  } else if (p.kind == AggKind::FedAvg) {
    p.wsum = j.at("wsum").get<double>();
    p.wmodel = j.at("wmodel").get<std::vector<double>>();
  } else {
    p.scalar = scalar_from_json(j.at("scalar"));
  }
  return p;
}

}  // namespace fq
