#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dualctl {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);
double parse_double(const std::string& s);
std::string trim(const std::string& s);

/// Row-major nested bracket list, e.g. [[0.5, 1.1], [0, 0.8]].
std::string format_matrix(const Eigen::MatrixXd& M);
std::string format_vector(const std::vector<double>& v);

/// Flat `key = value` documents. Values are bracket lists, numbers, or bare
/// words; a value continues on following lines until its brackets balance.
/// `#` starts a comment.
class KeyValueDoc {
 public:
  static KeyValueDoc parse(std::istream& in);
  static KeyValueDoc load(const std::string& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& raw);
  std::optional<std::string> raw(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  /// Typed accessors throw ValidationError naming the key on missing or
  /// malformed values.
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_int(const std::string& key) const;
  Eigen::MatrixXd get_matrix(const std::string& key) const;
  std::vector<double> get_vector(const std::string& key) const;

  void write(std::ostream& out) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace dualctl
