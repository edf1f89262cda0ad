#include "fq/pipeline.hpp"

#include <algorithm>

#include "json.hpp"

namespace fq {

using nlohmann::json;

DatasetRef DatasetRef::clone() const {
  DatasetRef r;
  r.kind = kind;
  r.name = name;
  if (name_expr) r.name_expr = name_expr->clone();
  r.guarded = guarded;
  return r;
}

Stage Stage::clone() const {
  Stage s;
  s.op = op;
  if (expr) s.expr = expr->clone();
  s.columns = columns;
  s.column = column;
  return s;
}

AggSpec AggSpec::clone() const {
  AggSpec a;
  a.kind = kind;
  if (target) a.target = target->clone();
  if (key) a.key = key->clone();
  a.group_inner = group_inner;
  a.fedavg_dim = fedavg_dim;
  return a;
}

Pipeline Pipeline::clone() const {
  Pipeline p;
  p.source = source.clone();
  for (auto& s : stages) p.stages.push_back(s.clone());
  p.local_agg = local_agg.clone();
  p.has_final_agg = has_final_agg;
  p.final_agg = final_agg;
  return p;
}

// --- parse -----------------------------------------------------------------

static ExprPtr parse_sub_expr(const json& j, const std::string& path) {
  return parse_expr_text(j.dump(), path);
}

static AggSpec parse_agg(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind"))
    throw Error("BadPipeline", "aggregate needs a kind at " + path);
  AggSpec a;
  a.kind = agg_kind_from_name(j["kind"].get<std::string>());
  switch (a.kind) {
    case AggKind::Count:
      break;
    case AggKind::Sum:
    case AggKind::Mean:
    case AggKind::Min:
    case AggKind::Max:
      if (!j.contains("target"))
        throw Error("BadPipeline", "aggregate needs a target at " + path);
      a.target = parse_sub_expr(j["target"], path + "/target");
      break;
    case AggKind::GroupBy: {
      if (!j.contains("key") || !j.contains("inner"))
        throw Error("BadPipeline", "groupby needs key and inner at " + path);
      a.key = parse_sub_expr(j["key"], path + "/key");
      AggSpec inner = parse_agg(j["inner"], path + "/inner");
      if (inner.kind == AggKind::GroupBy || inner.kind == AggKind::FedAvg)
        throw Error("BadPipeline", "groupby inner must be scalar at " + path);
      a.group_inner = inner.kind;
      if (inner.target) a.target = std::move(inner.target);
      break;
    }
    case AggKind::FedAvg:
      if (!j.contains("dim") || !j["dim"].is_number_integer() || j["dim"].get<int>() < 1)
        throw Error("BadPipeline", "fedavg needs a positive dim at " + path);
      a.fedavg_dim = j["dim"].get<size_t>();
      break;
  }
  return a;
}

Pipeline parse_pipeline_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& ex) {
    throw Error("BadPipeline", std::string("parse failure: ") + ex.what());
  }
  if (!j.is_object()) throw Error("BadPipeline", "pipeline must be an object");
  for (const char* key : {"source", "stages", "local_agg"})
    if (!j.contains(key))
      throw Error("BadPipeline", std::string("missing '") + key + "'");

  Pipeline p;
  const json& src = j["source"];
  std::string kind = src.value("kind", "");
  if (kind == "literal") {
    p.source.kind = DatasetRef::Kind::Literal;
    if (!src.contains("name")) throw Error("BadPipeline", "literal source needs a name");
    p.source.name = src["name"].get<std::string>();
  } else if (kind == "computed") {
    p.source.kind = DatasetRef::Kind::Computed;
    if (!src.contains("name_expr"))
      throw Error("BadPipeline", "computed source needs name_expr");
    p.source.name_expr = parse_sub_expr(src["name_expr"], "source/name_expr");
    p.source.guarded = src.value("guarded", false);
  } else {
    throw Error("BadPipeline", "source kind must be literal or computed");
  }

  if (!j["stages"].is_array()) throw Error("BadPipeline", "stages must be an array");
  size_t i = 0;
  for (auto& sj : j["stages"]) {
    std::string base = "stages/" + std::to_string(i);
    Stage s;
    std::string op = sj.value("op", "");
    if (op == "filter") {
      s.op = Stage::Op::Filter;
      if (!sj.contains("expr")) throw Error("BadPipeline", "filter needs expr at " + base);
      s.expr = parse_sub_expr(sj["expr"], base + "/expr");
    } else if (op == "project") {
      s.op = Stage::Op::Project;
      if (!sj.contains("columns") || !sj["columns"].is_array() || sj["columns"].empty())
        throw Error("BadPipeline", "project needs columns at " + base);
      for (auto& c : sj["columns"]) s.columns.push_back(c.get<std::string>());
    } else if (op == "map") {
      s.op = Stage::Op::Map;
      if (!sj.contains("column") || !sj.contains("expr"))
        throw Error("BadPipeline", "map needs column and expr at " + base);
      s.column = sj["column"].get<std::string>();
      s.expr = parse_sub_expr(sj["expr"], base + "/expr");
    } else {
      throw Error("BadPipeline", "unknown stage op '" + op + "' at " + base);
    }
    p.stages.push_back(std::move(s));
    i++;
  }

  p.local_agg = parse_agg(j["local_agg"], "local_agg");
  if (j.contains("final_agg")) {
    const json& fj = j["final_agg"];
    if (!fj.is_object() || !fj.contains("kind"))
      throw Error("BadPipeline", "final_agg needs a kind");
    p.has_final_agg = true;
    p.final_agg = agg_kind_from_name(fj["kind"].get<std::string>());
  }
  return p;
}

// --- serialize -------------------------------------------------------------

static json expr_json(const Expr& e) { return json::parse(expr_to_text(e)); }

static json agg_to_json(const AggSpec& a) {
  json j{{"kind", agg_kind_name(a.kind)}};
  switch (a.kind) {
    case AggKind::Count:
      break;
    case AggKind::GroupBy: {
      j["key"] = expr_json(*a.key);
      json inner{{"kind", agg_kind_name(a.group_inner)}};
      if (a.target) inner["target"] = expr_json(*a.target);
      j["inner"] = inner;
      break;
    }
    case AggKind::FedAvg:
      j["dim"] = a.fedavg_dim;
      break;
    default:
      j["target"] = expr_json(*a.target);
      break;
  }
  return j;
}

std::string pipeline_to_text(const Pipeline& p) {
  json src;
  if (p.source.kind == DatasetRef::Kind::Literal) {
    src = json{{"kind", "literal"}, {"name", p.source.name}};
  } else {
    src = json{{"kind", "computed"}, {"name_expr", expr_json(*p.source.name_expr)}};
    if (p.source.guarded) src["guarded"] = true;
  }
  json stages = json::array();
  for (auto& s : p.stages) {
    switch (s.op) {
      case Stage::Op::Filter:
        stages.push_back({{"op", "filter"}, {"expr", expr_json(*s.expr)}});
        break;
      case Stage::Op::Project:
        stages.push_back({{"op", "project"}, {"columns", s.columns}});
        break;
      case Stage::Op::Map:
        stages.push_back({{"op", "map"}, {"column", s.column}, {"expr", expr_json(*s.expr)}});
        break;
    }
  }
  json j{{"source", src},
         {"stages", stages},
         {"local_agg", agg_to_json(p.local_agg)}};
  if (p.has_final_agg) j["final_agg"] = json{{"kind", agg_kind_name(p.final_agg)}};
  return j.dump();
}

// --- validation --------------------------------------------------------------

static bool numeric(Type t) { return t == Type::Int || t == Type::Float; }

Schema validate_pipeline(const Pipeline& p, const Schema& source_schema,
                         const ParamMap& params) {
  if (p.source.kind == DatasetRef::Kind::Computed) {
    // Name expressions see no row, so they may only use literals/params.
    Schema empty;
    if (type_check(*p.source.name_expr, empty, params) != Type::Str)
      throw Error("TypeMismatch", "computed source name must be a string");
  }

  Schema cur = source_schema;
  for (auto& s : p.stages) {
    switch (s.op) {
      case Stage::Op::Filter:
        if (type_check(*s.expr, cur, params) != Type::Bool)
          throw Error("TypeMismatch", "filter predicate must be bool at " + s.expr->path);
        break;
      case Stage::Op::Project: {
        Schema next;
        for (auto& c : s.columns) {
          int i = cur.index_of(c);
          if (i < 0) throw Error("UnknownColumn", "project references '" + c + "'");
          next.columns.push_back(cur.columns[static_cast<size_t>(i)]);
        }
        cur = next;
        break;
      }
      case Stage::Op::Map: {
        Type t = type_check(*s.expr, cur, params);
        int i = cur.index_of(s.column);
        if (i < 0) cur.columns.push_back({s.column, t});
        else cur.columns[static_cast<size_t>(i)].type = t;
        break;
      }
    }
  }

  const AggSpec& a = p.local_agg;
  switch (a.kind) {
    case AggKind::Count:
      break;
    case AggKind::Sum:
    case AggKind::Mean:
    case AggKind::Min:
    case AggKind::Max:
      if (!numeric(type_check(*a.target, cur, params)))
        throw Error("TypeMismatch", "aggregate target must be numeric");
      break;
    case AggKind::GroupBy: {
      Type kt = type_check(*a.key, cur, params);
      if (kt != Type::Int && kt != Type::Str)
        throw Error("TypeMismatch", "groupby key must be int or string");
      if (a.group_inner != AggKind::Count) {
        if (!a.target || !numeric(type_check(*a.target, cur, params)))
          throw Error("TypeMismatch", "groupby inner target must be numeric");
      }
      break;
    }
    case AggKind::FedAvg: {
      for (size_t d = 0; d < a.fedavg_dim; d++) {
        int i = cur.index_of("x" + std::to_string(d));
        if (i < 0 || cur.columns[static_cast<size_t>(i)].type != Type::Float)
          throw Error("TypeMismatch", "fedavg needs float column x" + std::to_string(d));
      }
      int yi = cur.index_of("y");
      if (yi < 0 || cur.columns[static_cast<size_t>(yi)].type != Type::Float)
        throw Error("TypeMismatch", "fedavg needs float column y");
      break;
    }
  }
  return cur;
}

// --- execution ---------------------------------------------------------------

std::string resolve_source_name(const Pipeline& p, const ParamMap& params,
                                const DeviceEnv* env, RuntimeInspector* inspector) {
  std::string name;
  if (p.source.kind == DatasetRef::Kind::Literal) {
    name = p.source.name;
  } else {
    Schema empty;
    EvalContext ctx{&params, env, inspector};
    name = eval_expr(*p.source.name_expr, {}, empty, ctx).as_str();
  }
  if (inspector) inspector->check_dataset(name);
  return name;
}

static bool target_int_domain(const AggSpec& a, const Schema& s, const ParamMap& params) {
  if (!a.target) return false;
  return type_check(*a.target, s, params) == Type::Int;
}

static std::string group_key_string(const Value& v) {
  if (v.type() == Type::Int) return std::to_string(v.as_int());
  return v.as_str();
}

static void fold_scalar(ScalarPartial& sp, AggKind kind, const Value& tv) {
  switch (kind) {
    case AggKind::Count:
      sp.n = sp.n + 1;
      break;
    case AggKind::Sum:
      sp.n++;
      if (sp.int_domain) {
        std::int64_t r;
        if (__builtin_add_overflow(sp.i_acc, tv.as_int(), &r))
          throw Error("Overflow", "int64 sum overflow");
        sp.i_acc = r;
      } else {
        sp.f_acc += tv.num();
      }
      break;
    case AggKind::Mean:
      sp.n++;
      sp.f_acc += tv.num();
      break;
    case AggKind::Min:
    case AggKind::Max: {
      sp.n++;
      if (!sp.has_extreme) { sp.has_extreme = true; sp.extreme = tv; break; }
      bool wins;
      if (sp.int_domain)
        wins = kind == AggKind::Min ? tv.as_int() < sp.extreme.as_int()
                                    : tv.as_int() > sp.extreme.as_int();
      else
        wins = kind == AggKind::Min ? tv.num() < sp.extreme.num()
                                    : tv.num() > sp.extreme.num();
      if (wins) sp.extreme = tv;
      break;
    }
    default:
      throw Error("BadAgg", "unexpected fold kind");
  }
}

static Partial run_fedavg(const AggSpec& a, const std::vector<std::vector<Value>>& rows,
                          const Schema& schema, const FlParams* fl) {
  if (!fl) throw Error("BadParams", "fedavg dispatch lacks model parameters");
  size_t d = a.fedavg_dim;
  if (fl->model.size() != d)
    throw Error("BadParams", "model dimension mismatch");
  std::vector<size_t> xi(d);
  for (size_t i = 0; i < d; i++)
    xi[i] = static_cast<size_t>(schema.index_of("x" + std::to_string(i)));
  size_t yi = static_cast<size_t>(schema.index_of("y"));

  // Full-batch gradient steps on the local quadratic loss
  //   L(w) = 1/(2n) * sum_i (x_i . w - y_i)^2,  grad = 1/n * X^T (Xw - y)
  std::vector<double> w = fl->model;
  size_t n = rows.size();
  if (n > 0) {
    for (int e = 0; e < fl->epochs; e++) {
      std::vector<double> grad(d, 0.0);
      for (auto& row : rows) {
        double pred = 0;
        for (size_t i = 0; i < d; i++) pred += row[xi[i]].as_float() * w[i];
        double err = pred - row[yi].as_float();
        for (size_t i = 0; i < d; i++) grad[i] += err * row[xi[i]].as_float();
      }
      for (size_t i = 0; i < d; i++) w[i] -= fl->lr * grad[i] / static_cast<double>(n);
    }
  }
  Partial p = identity_partial(AggKind::FedAvg, false, AggKind::Count, false, d);
  if (n > 0) {
    p.wsum = static_cast<double>(n);
    for (size_t i = 0; i < d; i++) p.wmodel[i] = p.wsum * w[i];
  }
  return p;
}

Partial execute_local(const Pipeline& p, const Table& table, const ParamMap& params,
                      const FlParams* fl, const DeviceEnv* env,
                      RuntimeInspector* inspector, const ExecLimits& limits) {
  Schema out_schema = validate_pipeline(p, table.schema, params);
  EvalContext ctx{&params, env, inspector};

  // Precompute per-stage plans against the evolving schema.
  struct Plan {
    const Stage* stage;
    Schema schema_in;            // schema the stage's expressions see
    std::vector<size_t> keep;    // project indices
    int map_index = -1;          // map target (-1 = append)
  };
  std::vector<Plan> plans;
  Schema cur = table.schema;
  for (auto& s : p.stages) {
    Plan pl;
    pl.stage = &s;
    pl.schema_in = cur;
    switch (s.op) {
      case Stage::Op::Filter:
        break;
      case Stage::Op::Project: {
        Schema next;
        for (auto& c : s.columns) {
          int idx = cur.index_of(c);
          if (idx < 0) throw Error("UnknownColumn", "project column: " + c);
          pl.keep.push_back(static_cast<size_t>(idx));
          next.columns.push_back(cur.columns[static_cast<size_t>(idx)]);
        }
        cur = next;
        break;
      }
      case Stage::Op::Map: {
        pl.map_index = cur.index_of(s.column);
        Type t = type_check(*s.expr, cur, params);
        if (pl.map_index < 0) cur.columns.push_back({s.column, t});
        else cur.columns[static_cast<size_t>(pl.map_index)].type = t;
        break;
      }
    }
    plans.push_back(std::move(pl));
  }

  const AggSpec& a = p.local_agg;
  bool int_dom = a.kind == AggKind::GroupBy
                     ? (a.target && target_int_domain(a, out_schema, params))
                     : target_int_domain(a, out_schema, params);
  Partial acc = identity_partial(a.kind, int_dom, a.group_inner, int_dom, a.fedavg_dim);
  std::vector<std::vector<Value>> fed_rows;  // fedavg materializes its batch

  for (auto& row0 : table.rows) {
    std::vector<Value> row = row0;
    bool alive = true;
    for (auto& pl : plans) {
      const Stage& s = *pl.stage;
      if (s.op == Stage::Op::Filter) {
        if (!eval_expr(*s.expr, row, pl.schema_in, ctx).as_bool()) { alive = false; break; }
      } else if (s.op == Stage::Op::Project) {
        std::vector<Value> next;
        next.reserve(pl.keep.size());
        for (size_t i : pl.keep) next.push_back(row[i]);
        row = std::move(next);
      } else {
        Value v = eval_expr(*s.expr, row, pl.schema_in, ctx);
        if (pl.map_index < 0) row.push_back(std::move(v));
        else row[static_cast<size_t>(pl.map_index)] = std::move(v);
      }
    }
    if (!alive) continue;

    switch (a.kind) {
      case AggKind::Count:
        acc.scalar.n++;
        break;
      case AggKind::GroupBy: {
        std::string key = group_key_string(eval_expr(*a.key, row, out_schema, ctx));
        auto it = acc.groups.find(key);
        if (it == acc.groups.end()) {
          if (acc.groups.size() >= limits.groupby_cap)
            throw Error("GroupCardinality",
                        "group count exceeds cap of " + std::to_string(limits.groupby_cap));
          ScalarPartial sp;
          sp.kind = a.group_inner;
          sp.int_domain = int_dom;
          it = acc.groups.emplace(key, sp).first;
        }
        Value tv = a.target ? eval_expr(*a.target, row, out_schema, ctx) : Value();
        fold_scalar(it->second, a.group_inner, tv);
        break;
      }
      case AggKind::FedAvg:
        fed_rows.push_back(row);
        break;
      default: {
        Value tv = eval_expr(*a.target, row, out_schema, ctx);
        fold_scalar(acc.scalar, a.kind, tv);
        break;
      }
    }
  }

  if (a.kind == AggKind::FedAvg) return run_fedavg(a, fed_rows, out_schema, fl);
  return acc;
}

FlParams fl_params_from(const ParamMap& params, size_t dim) {
  FlParams fl;
  fl.model.assign(dim, 0.0);
  auto it = params.find("fl_model");
  if (it != params.end()) {
    json arr = json::parse(std::get<std::string>(it->second.v), nullptr, false);
    if (arr.is_discarded() || !arr.is_array())
      throw Error("BadManifest", "fl_model must be a JSON array of numbers");
    fl.model.clear();
    for (const auto& x : arr) fl.model.push_back(x.get<double>());
  }
  it = params.find("fl_lr");
  if (it != params.end()) fl.lr = it->second.num();
  it = params.find("fl_epochs");
  if (it != params.end()) fl.epochs = static_cast<int>(std::get<std::int64_t>(it->second.v));
  return fl;
}

}  // namespace fq
