#include "eyeadapt/history.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eyeadapt/errors.hpp"

namespace eyeadapt {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw DataError("not a number: '" + text + "'");
  return v;
}

void write_history_csv(const History& history, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,term,value\n";
  for (const auto& row : history) out << row.step << ',' << row.term << ',' << format_double(row.value) << '\n';
}

History read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "step,term,value") throw FormatError(path.filename().string(), "unexpected history header");
  History rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string step, term, value;
    std::getline(ss, step, ',');
    std::getline(ss, term, ',');
    std::getline(ss, value);
    rows.push_back({std::stoll(step), term, parse_double(value)});
  }
  return rows;
}

void guard_finite(double value, const std::string& term, std::int64_t step) {
  if (!std::isfinite(value)) {
    throw DivergenceError("loss '" + term + "' became non-finite at step " + std::to_string(step));
  }
}

}  // namespace eyeadapt
