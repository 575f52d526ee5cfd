#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace ned {

/// One value in a config file: number, string, flat list, or inline table.
struct ConfigValue {
  using Table = std::map<std::string, ConfigValue>;
  std::variant<double, std::string, std::vector<ConfigValue>, Table> data;

  bool is_number() const { return std::holds_alternative<double>(data); }
  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_list() const { return std::holds_alternative<std::vector<ConfigValue>>(data); }
  bool is_table() const { return std::holds_alternative<Table>(data); }

  double number(const std::string& key) const;
  const std::string& string(const std::string& key) const;
  const std::vector<ConfigValue>& list(const std::string& key) const;
  const Table& table(const std::string& key) const;
};

/// Parses `key = value` lines (strings, numbers, [lists], {inline tables},
/// # comments). Position-reported errors via ned::Error.
ConfigValue::Table parse_config(const std::string& text);

}  // namespace ned
