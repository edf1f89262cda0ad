#include "fq/table.hpp"

#include <cstdlib>
#include <sstream>

#include "json.hpp"

namespace fq {

using nlohmann::json;

int Schema::index_of(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); i++)
    if (columns[i].name == name) return static_cast<int>(i);
  return -1;
}

bool Schema::operator==(const Schema& o) const {
  if (columns.size() != o.columns.size()) return false;
  for (size_t i = 0; i < columns.size(); i++)
    if (columns[i].name != o.columns[i].name || columns[i].type != o.columns[i].type)
      return false;
  return true;
}

size_t Table::col(const std::string& name) const {
  int i = schema.index_of(name);
  if (i < 0) throw Error("UnknownColumn", "no column '" + name + "'");
  return static_cast<size_t>(i);
}

Schema parse_schema_json(const std::string& json_text) {
  json doc = json::parse(json_text);
  if (!doc.is_object() || !doc.contains("columns") || !doc["columns"].is_array())
    throw Error("BadSchema", "schema document needs a 'columns' array");
  Schema s;
  for (auto& c : doc["columns"]) {
    if (!c.contains("name") || !c.contains("type"))
      throw Error("BadSchema", "column entry needs name and type");
    s.columns.push_back({c["name"].get<std::string>(),
                         type_from_name(c["type"].get<std::string>())});
  }
  if (s.columns.empty()) throw Error("BadSchema", "schema has no columns");
  return s;
}

std::string schema_to_json(const Schema& s) {
  json cols = json::array();
  for (auto& c : s.columns)
    cols.push_back({{"name", c.name}, {"type", type_name(c.type)}});
  return json{{"columns", cols}}.dump();
}

// --- CSV ---------------------------------------------------------------

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); i++) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') { cur.push_back('"'); i++; }
        else quoted = false;
      } else cur.push_back(c);
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

static Value parse_cell(const std::string& raw, Type t, size_t line_no) {
  try {
    switch (t) {
      case Type::Int: return Value(static_cast<std::int64_t>(std::stoll(raw)));
      case Type::Float: return Value(std::stod(raw));
      case Type::Str: return Value(raw);
      case Type::Bool:
        if (raw == "true" || raw == "1") return Value(true);
        if (raw == "false" || raw == "0") return Value(false);
        throw std::invalid_argument(raw);
    }
  } catch (const std::exception&) {
    throw Error("BadCsv", "line " + std::to_string(line_no) + ": cannot parse '" +
                              raw + "' as " + type_name(t));
  }
  throw Error("BadCsv", "unreachable");
}

Table load_csv(const std::string& csv_text, const Schema& schema) {
  Table t;
  t.schema = schema;
  std::istringstream in(csv_text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (line_no == 1) {
      if (cells.size() != schema.columns.size())
        throw Error("BadCsv", "header width does not match schema");
      for (size_t i = 0; i < cells.size(); i++)
        if (cells[i] != schema.columns[i].name)
          throw Error("BadCsv", "header column '" + cells[i] + "' expected '" +
                                    schema.columns[i].name + "'");
      continue;
    }
    if (cells.size() != schema.columns.size())
      throw Error("BadCsv", "line " + std::to_string(line_no) + ": width mismatch");
    std::vector<Value> row;
    row.reserve(cells.size());
    for (size_t i = 0; i < cells.size(); i++)
      row.push_back(parse_cell(cells[i], schema.columns[i].type, line_no));
    t.rows.push_back(std::move(row));
  }
  return t;
}

static std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string table_to_csv(const Table& t) {
  std::ostringstream out;
  for (size_t i = 0; i < t.schema.columns.size(); i++)
    out << (i ? "," : "") << csv_escape(t.schema.columns[i].name);
  out << "\n";
  for (auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); i++) {
      if (i) out << ",";
      const Value& v = row[i];
      switch (v.type()) {
        case Type::Int: out << v.as_int(); break;
        case Type::Float: out << fmt_fixed(v.as_float(), 6); break;
        case Type::Str: out << csv_escape(v.as_str()); break;
        case Type::Bool: out << (v.as_bool() ? "true" : "false"); break;
      }
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace fq
