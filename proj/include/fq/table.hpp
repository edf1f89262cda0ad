#pragma once
// Column-schema'd row tables: the device-local dataset representation.
// Datasets live on disk as CSV plus a JSON sidecar schema.

#include <string>
#include <vector>

#include "fq/value.hpp"

namespace fq {

struct Column {
  std::string name;
  Type type;
};

struct Schema {
  std::vector<Column> columns;

  int index_of(const std::string& name) const;  // -1 when absent
  bool operator==(const Schema& o) const;
};

struct Table {
  Schema schema;
  std::vector<std::vector<Value>> rows;

  size_t col(const std::string& name) const;  // throws UnknownColumn
};

// Sidecar schema document: {"columns":[{"name":...,"type":...},...]}
Schema parse_schema_json(const std::string& json_text);
std::string schema_to_json(const Schema& s);

// CSV with a header row; values parsed per the sidecar schema.
// Quoting: fields containing commas/quotes use double-quote escaping.
Table load_csv(const std::string& csv_text, const Schema& schema);
std::string table_to_csv(const Table& t);

}  // namespace fq
