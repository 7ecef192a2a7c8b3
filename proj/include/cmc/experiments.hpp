#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cmc {

inline constexpr const char* kVersion = "0.1.0";

enum class Scale { desk, paper };

Scale parse_scale(const std::string& name);
std::string to_string(Scale s);

/// Batch-run request. `overrides_json` is a JSON object whose keys override
/// the scale defaults of the chosen experiment; unknown keys are a ConfigError.
struct ExperimentConfig {
  std::string id;
  std::uint64_t seed = 0;
  Scale scale = Scale::desk;
  std::string overrides_json = "{}";
  /// Worker threads for independent runs; 0 picks the hardware count. Never
  /// changes the output.
  std::size_t threads = 0;
};

/// Long-format table; cells are already formatted.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  /// Rows whose cells equal `value` in every listed column.
  std::vector<const std::vector<std::string>*> select(
      const std::vector<std::pair<std::string, std::string>>& where) const;
  /// The numeric cell in `column` of the single row matching `where`.
  double value(const std::vector<std::pair<std::string, std::string>>& where, const std::string& column) const;
};

struct ExperimentOutput {
  std::string id;
  std::uint64_t seed = 0;
  /// FNV-1a of the resolved parameter set (defaults plus overrides).
  std::string config_hash;
  std::string resolved_json;
  std::vector<Table> tables;
};

const std::vector<std::string>& experiment_ids();

/// Runs exp1..exp6. Throws ConfigError for bad ids or parameters and
/// NumericalError from the numerics.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// CSV text of one table: a "# ..." line with version, experiment, seed and
/// config hash, then the header and rows.
std::string table_to_csv(const ExperimentOutput& out, const Table& t);

/// Writes <dir>/<table name>.csv for every table; creates `dir` if needed.
std::vector<std::string> write_output(const ExperimentOutput& out, const std::string& dir);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace cmc
