#pragma once

#include <map>
#include <string>
#include <vector>

#include "segscribe/evalx.hpp"

namespace segscribe {

/// Flat "key = value" run configuration. '#' starts a comment; blank lines
/// and surrounding whitespace are ignored. Keys are the experiment plan keys
/// (as rendered by ExperimentPlan::canonical_text) plus corpus, out, synth.*,
/// frontend.* and eval.rounds.
class RunConfig {
 public:
  RunConfig() = default;

  /// Throws UsageError on unknown or repeated keys and malformed lines.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  static const std::vector<std::string>& known_keys();

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  /// Throws UsageError for unknown keys.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;

  /// Sorted "key = value" lines.
  std::string canonical() const;
  /// fnv1a_hex of canonical().
  std::string digest() const;

  /// Defaults overridden by the plan keys present; digest = digest().
  ExperimentPlan plan() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace segscribe
