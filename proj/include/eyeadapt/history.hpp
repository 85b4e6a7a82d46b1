#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace eyeadapt {

/// One logged loss value. Histories are written as CSV with columns step,term,value.
struct HistoryRow {
  std::int64_t step = 0;
  std::string term;
  double value = 0.0;

  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

using History = std::vector<HistoryRow>;

void write_history_csv(const History& history, const std::filesystem::path& path);
History read_history_csv(const std::filesystem::path& path);

/// Throws DivergenceError when `value` is not finite.
void guard_finite(double value, const std::string& term, std::int64_t step);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text);

}  // namespace eyeadapt
