#include "safeil/toml_reader.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace safeil {

namespace {

struct Parser {
  const std::string& text;
  const std::string& source;
  size_t pos = 0;
  int line = 1;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(source + ":" + std::to_string(line) + ": " + msg);
  }

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char take() {
    const char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }

  void skip_ws_inline() {
    while (!done() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) take();
  }

  // whitespace, newlines and comments
  void skip_ws_and_comments() {
    for (;;) {
      skip_ws_inline();
      if (done()) return;
      if (peek() == '#') {
        while (!done() && peek() != '\n') take();
        continue;
      }
      if (peek() == '\n') {
        take();
        continue;
      }
      return;
    }
  }

  std::string parse_bare_key() {
    std::string key;
    while (!done() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                       peek() == '-' || peek() == '.'))
      key.push_back(take());
    if (key.empty()) fail("expected a key");
    return key;
  }

  std::string parse_basic_string() {
    take();  // opening quote
    std::string out;
    for (;;) {
      if (done() || peek() == '\n') fail("unterminated string");
      char c = take();
      if (c == '"') return out;
      if (c == '\\') {
        if (done()) fail("unterminated escape");
        const char e = take();
        switch (e) {
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          default: fail(std::string("unsupported escape '\\") + e + "'");
        }
      } else {
        out.push_back(c);
      }
    }
  }

  TomlValue parse_value() {
    skip_ws_inline();
    if (done()) fail("expected a value");
    TomlValue v;
    const char c = peek();
    if (c == '"') {
      v.kind = TomlValue::Kind::String;
      v.str = parse_basic_string();
      return v;
    }
    if (c == '[') {
      take();
      v.kind = TomlValue::Kind::Array;
      skip_ws_and_comments();  // arrays may span lines
      if (!done() && peek() == ']') {
        take();
        return v;
      }
      for (;;) {
        v.array.push_back(parse_value());
        skip_ws_and_comments();
        if (done()) fail("unterminated array");
        if (peek() == ',') {
          take();
          skip_ws_and_comments();
          if (!done() && peek() == ']') {  // trailing comma
            take();
            return v;
          }
          continue;
        }
        if (peek() == ']') {
          take();
          return v;
        }
        fail("expected ',' or ']' in array");
      }
    }
    // bare token: bool or number
    std::string tok;
    while (!done() && peek() != ',' && peek() != ']' && peek() != '\n' && peek() != '#' &&
           peek() != ' ' && peek() != '\t' && peek() != '\r')
      tok.push_back(take());
    if (tok == "true" || tok == "false") {
      v.kind = TomlValue::Kind::Boolean;
      v.boolean = tok == "true";
      return v;
    }
    if (tok.empty()) fail("expected a value");
    const bool looks_float = tok.find_first_of(".eEnN") != std::string::npos &&
                             tok.find("0x") == std::string::npos;
    try {
      size_t used = 0;
      if (looks_float) {
        v.kind = TomlValue::Kind::Float;
        v.num = std::stod(tok, &used);
      } else {
        v.kind = TomlValue::Kind::Integer;
        v.inum = std::stoll(tok, &used);
        v.num = static_cast<double>(v.inum);
      }
      if (used != tok.size()) fail("bad value '" + tok + "'");
    } catch (const std::exception&) {
      fail("bad value '" + tok + "'");
    }
    if (v.kind == TomlValue::Kind::Float && !std::isfinite(v.num))
      fail("non-finite number '" + tok + "'");
    return v;
  }

  void expect_line_end() {
    skip_ws_inline();
    if (done()) return;
    if (peek() == '#') {
      while (!done() && peek() != '\n') take();
    }
    if (!done()) {
      if (peek() != '\n') fail("unexpected trailing characters");
      take();
    }
  }
};

}  // namespace

double TomlValue::as_double(const std::string& path) const {
  if (kind == Kind::Float) return num;
  if (kind == Kind::Integer) return static_cast<double>(inum);
  throw Error(path + ": expected a number");
}

long long TomlValue::as_int(const std::string& path) const {
  if (kind == Kind::Integer) return inum;
  throw Error(path + ": expected an integer");
}

const std::string& TomlValue::as_string(const std::string& path) const {
  if (kind == Kind::String) return str;
  throw Error(path + ": expected a string");
}

bool TomlValue::as_bool(const std::string& path) const {
  if (kind == Kind::Boolean) return boolean;
  throw Error(path + ": expected a boolean");
}

TomlTable TomlTable::parse_string(const std::string& text, const std::string& source) {
  TomlTable table;
  Parser p{text, source};
  std::string prefix;
  for (;;) {
    p.skip_ws_and_comments();
    if (p.done()) break;
    if (p.peek() == '[') {
      p.take();
      if (!p.done() && p.peek() == '[') p.fail("arrays of tables are not supported");
      p.skip_ws_inline();
      prefix = p.parse_bare_key();
      p.skip_ws_inline();
      if (p.done() || p.peek() != ']') p.fail("expected ']' after table name");
      p.take();
      p.expect_line_end();
      continue;
    }
    const std::string key = p.parse_bare_key();
    p.skip_ws_inline();
    if (p.done() || p.peek() != '=') p.fail("expected '=' after key '" + key + "'");
    p.take();
    TomlValue value = p.parse_value();
    p.expect_line_end();
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (table.values_.count(full)) p.fail("duplicate key '" + full + "'");
    table.values_.emplace(full, std::move(value));
  }
  return table;
}

TomlTable TomlTable::parse_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

const TomlValue& TomlTable::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(key + ": missing required key");
  return it->second;
}

double TomlTable::get_double(const std::string& key) const { return at(key).as_double(key); }

double TomlTable::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long TomlTable::get_int(const std::string& key) const { return at(key).as_int(key); }

long long TomlTable::get_int_or(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::string TomlTable::get_string(const std::string& key) const { return at(key).as_string(key); }

std::string TomlTable::get_string_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

bool TomlTable::get_bool_or(const std::string& key, bool fallback) const {
  return has(key) ? at(key).as_bool(key) : fallback;
}

std::vector<double> TomlTable::get_double_array(const std::string& key) const {
  const TomlValue& v = at(key);
  if (v.kind != TomlValue::Kind::Array) throw Error(key + ": expected an array");
  std::vector<double> out;
  out.reserve(v.array.size());
  for (size_t i = 0; i < v.array.size(); ++i)
    out.push_back(v.array[i].as_double(key + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<long long> TomlTable::get_int_array(const std::string& key) const {
  const TomlValue& v = at(key);
  if (v.kind != TomlValue::Kind::Array) throw Error(key + ": expected an array");
  std::vector<long long> out;
  out.reserve(v.array.size());
  for (size_t i = 0; i < v.array.size(); ++i)
    out.push_back(v.array[i].as_int(key + "[" + std::to_string(i) + "]"));
  return out;
}

Vector TomlTable::get_vector(const std::string& key) const {
  const auto data = get_double_array(key);
  require(!data.empty(), key + ": array must not be empty");
  return Eigen::Map<const Vector>(data.data(), static_cast<long>(data.size()));
}

Matrix TomlTable::get_matrix(const std::string& key) const {
  const TomlValue& v = at(key);
  if (v.kind != TomlValue::Kind::Array || v.array.empty())
    throw Error(key + ": expected a non-empty array of rows");
  const size_t rows = v.array.size();
  size_t cols = 0;
  for (size_t i = 0; i < rows; ++i) {
    const TomlValue& row = v.array[i];
    if (row.kind != TomlValue::Kind::Array)
      throw Error(key + "[" + std::to_string(i) + "]: expected a row array");
    if (i == 0)
      cols = row.array.size();
    else if (row.array.size() != cols)
      throw Error(key + "[" + std::to_string(i) + "]: ragged rows");
  }
  require(cols > 0, key + ": rows must not be empty");
  Matrix m(static_cast<long>(rows), static_cast<long>(cols));
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j)
      m(static_cast<long>(i), static_cast<long>(j)) = v.array[i].array[j].as_double(
          key + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  return m;
}

std::vector<std::string> TomlTable::keys() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

}  // namespace safeil
