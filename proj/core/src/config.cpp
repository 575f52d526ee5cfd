#include "nedspec/config.hpp"

#include <cctype>

#include "nedspec/expression.hpp"

namespace ned {

double ConfigValue::number(const std::string& key) const {
  if (!is_number()) throw Error("config", "field '" + key + "' must be a number");
  return std::get<double>(data);
}

const std::string& ConfigValue::string(const std::string& key) const {
  if (!is_string()) throw Error("config", "field '" + key + "' must be a string");
  return std::get<std::string>(data);
}

const std::vector<ConfigValue>& ConfigValue::list(const std::string& key) const {
  if (!is_list()) throw Error("config", "field '" + key + "' must be a list");
  return std::get<std::vector<ConfigValue>>(data);
}

const ConfigValue::Table& ConfigValue::table(const std::string& key) const {
  if (!is_table()) throw Error("config", "field '" + key + "' must be a table");
  return std::get<Table>(data);
}

namespace {

class ConfigParser {
public:
  explicit ConfigParser(const std::string& text) : text_(text) {}

  ConfigValue::Table run() {
    ConfigValue::Table out;
    for (;;) {
      skip_blank();
      if (pos_ >= text_.size()) break;
      std::string key = parse_key();
      expect('=');
      ConfigValue v = parse_value();
      skip_spaces();
      if (pos_ < text_.size() && text_[pos_] != '\n' && text_[pos_] != '#') {
        fail("unexpected input after value for '" + key + "'");
      }
      if (out.count(key)) fail("duplicate key '" + key + "'");
      out.emplace(std::move(key), std::move(v));
    }
    return out;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("config:line " + std::to_string(line_), msg);
  }

  void skip_spaces() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) ++pos_;
    if (pos_ < text_.size() && text_[pos_] == '#') {
      while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
    }
  }

  // also crosses newlines (inside lists/tables and between entries)
  void skip_blank() {
    for (;;) {
      skip_spaces();
      if (pos_ < text_.size() && text_[pos_] == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      break;
    }
  }

  void expect(char c) {
    skip_spaces();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string parse_key() {
    skip_spaces();
    size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (pos_ == start) fail("expected a key");
    return text_.substr(start, pos_ - start);
  }

  ConfigValue parse_value() {
    skip_blank();
    if (pos_ >= text_.size()) fail("expected a value");
    char c = text_[pos_];
    if (c == '"') return parse_string();
    if (c == '[') return parse_list();
    if (c == '{') return parse_table();
    return parse_number();
  }

  ConfigValue parse_string() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\n') fail("unterminated string");
      out.push_back(text_[pos_++]);
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return ConfigValue{out};
  }

  ConfigValue parse_number() {
    size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                                   text_[pos_] == '+' || text_[pos_] == '-' || text_[pos_] == '.' ||
                                   text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
    }
    try {
      size_t used = 0;
      double v = std::stod(text_.substr(start, pos_ - start), &used);
      if (used != pos_ - start) fail("malformed number");
      return ConfigValue{v};
    } catch (const std::exception&) {
      pos_ = start;
      fail("malformed number");
    }
  }

  ConfigValue parse_list() {
    ++pos_;  // '['
    std::vector<ConfigValue> items;
    skip_blank();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return ConfigValue{std::move(items)};
    }
    for (;;) {
      items.push_back(parse_value());
      skip_blank();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        ++pos_;
        skip_blank();
        if (pos_ < text_.size() && text_[pos_] == ']') {  // trailing comma
          ++pos_;
          break;
        }
        continue;
      }
      if (pos_ < text_.size() && text_[pos_] == ']') {
        ++pos_;
        break;
      }
      fail("expected ',' or ']' in list");
    }
    return ConfigValue{std::move(items)};
  }

  ConfigValue parse_table() {
    ++pos_;  // '{'
    ConfigValue::Table out;
    skip_blank();
    if (pos_ < text_.size() && text_[pos_] == '}') {
      ++pos_;
      return ConfigValue{std::move(out)};
    }
    for (;;) {
      std::string key = parse_key();
      expect('=');
      ConfigValue v = parse_value();
      if (out.count(key)) fail("duplicate key '" + key + "' in table");
      out.emplace(std::move(key), std::move(v));
      skip_blank();
      if (pos_ < text_.size() && text_[pos_] == ',') {
        ++pos_;
        skip_blank();
        continue;
      }
      if (pos_ < text_.size() && text_[pos_] == '}') {
        ++pos_;
        break;
      }
      fail("expected ',' or '}' in table");
    }
    return ConfigValue{std::move(out)};
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
};

}  // namespace

ConfigValue::Table parse_config(const std::string& text) {
  return ConfigParser(text).run();
}

}  // namespace ned
