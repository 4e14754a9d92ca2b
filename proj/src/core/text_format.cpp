#include "dualctl/text_format.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "dualctl/error.hpp"

namespace dualctl {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t == "nan") return std::nan("");
  if (t == "inf") return INFINITY;
  if (t == "-inf") return -INFINITY;
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t[0] == '+') ++first;
  auto res = std::from_chars(first, t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_matrix(const Eigen::MatrixXd& M) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    out += i ? ", [" : "[";
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) out += ", ";
      out += format_double(M(i, j));
    }
    out += "]";
  }
  return out + "]";
}

std::string format_vector(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out + "]";
}

namespace {

int bracket_balance(const std::string& s) {
  int depth = 0;
  for (char c : s) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
  }
  return depth;
}

std::string strip_comment(const std::string& line) {
  const auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

nlohmann::json parse_json_value(const std::string& key, const std::string& raw) {
  try {
    return nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(key, "malformed value '" + raw + "'");
  }
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(std::istream& in) {
  KeyValueDoc doc;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("", "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError("", "line " + std::to_string(lineno) + ": empty key");
    while (bracket_balance(value) > 0 && std::getline(in, line)) {
      ++lineno;
      value += " " + trim(strip_comment(line));
    }
    if (bracket_balance(value) != 0) throw ValidationError(key, "unbalanced brackets");
    doc.set(key, value);
  }
  return doc;
}

KeyValueDoc KeyValueDoc::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("", "cannot open '" + path + "'");
  return parse(in);
}

bool KeyValueDoc::has(const std::string& key) const { return raw(key).has_value(); }

void KeyValueDoc::set(const std::string& key, const std::string& raw_value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = raw_value;
      return;
    }
  }
  entries_.emplace_back(key, raw_value);
}

std::optional<std::string> KeyValueDoc::raw(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string KeyValueDoc::get_string(const std::string& key) const {
  auto v = raw(key);
  if (!v) throw ValidationError(key, "missing required key");
  std::string s = *v;
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

double KeyValueDoc::get_double(const std::string& key) const {
  const std::string s = get_string(key);
  try {
    return parse_double(s);
  } catch (const std::exception&) {
    throw ValidationError(key, "expected a number, got '" + s + "'");
  }
}

long KeyValueDoc::get_int(const std::string& key) const {
  const double v = get_double(key);
  if (v != std::floor(v) || std::abs(v) > 9.0e15) throw ValidationError(key, "expected an integer");
  return static_cast<long>(v);
}

Eigen::MatrixXd KeyValueDoc::get_matrix(const std::string& key) const {
  const std::string s = get_string(key);
  const nlohmann::json j = parse_json_value(key, s);
  if (j.is_number()) return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw ValidationError(key, "expected a nested bracket list");
  const bool nested = j[0].is_array();
  const std::size_t rows = nested ? j.size() : 1;
  const std::size_t cols = nested ? j[0].size() : j.size();
  if (cols == 0) throw ValidationError(key, "empty matrix row");
  Eigen::MatrixXd M(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const nlohmann::json& row = nested ? j[r] : j;
    if (!row.is_array() || row.size() != cols) throw ValidationError(key, "ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw ValidationError(key, "non-numeric matrix entry");
      M(r, c) = row[c].get<double>();
    }
  }
  return M;
}

std::vector<double> KeyValueDoc::get_vector(const std::string& key) const {
  const std::string s = get_string(key);
  const nlohmann::json j = parse_json_value(key, s);
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array()) throw ValidationError(key, "expected a bracket list");
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) throw ValidationError(key, "non-numeric list entry");
    out.push_back(e.get<double>());
  }
  return out;
}

void KeyValueDoc::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
}

}  // namespace dualctl
