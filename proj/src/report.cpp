#include "eyeadapt/report.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/history.hpp"

namespace eyeadapt {

namespace {

constexpr const char* kPlusMinus = "\xC2\xB1";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void check_name(const std::string& name) {
  if (name.empty() || name.find_first_of(",\n") != std::string::npos) {
    throw ConfigError("report names must be nonempty and free of commas: '" + name + "'");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
                               {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};

cv::Scalar color(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof kPalette[0])]; }

void draw_frame(cv::Mat& img, const cv::Rect& area, const std::string& xlabel, const std::string& ylabel) {
  cv::rectangle(img, area, {0, 0, 0}, 1);
  cv::putText(img, xlabel, {area.x + area.width / 2 - 60, area.y + area.height + 40}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              {0, 0, 0}, 1, cv::LINE_AA);
  cv::putText(img, ylabel, {8, area.y - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0}, 1, cv::LINE_AA);
}

void plot_miou(const std::vector<MetricsReport>& reports, const std::vector<int>& ns,
               const std::filesystem::path& path) {
  cv::Mat img(480, 720, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Rect area(70, 40, 480, 380);
  draw_frame(img, area, "real images N", "mIoU");
  const auto x_of = [&](std::size_t i) {
    return ns.size() == 1 ? area.x + area.width / 2
                          : area.x + 20 + static_cast<int>(i * (area.width - 40) / (ns.size() - 1));
  };
  const auto y_of = [&](double v) {
    return area.y + area.height - static_cast<int>(std::clamp(v, 0.0, 1.0) * area.height);
  };
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    cv::line(img, {area.x - 4, y_of(v)}, {area.x, y_of(v)}, {0, 0, 0});
    cv::putText(img, format_double(v), {area.x - 40, y_of(v) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1,
                cv::LINE_AA);
  }
  for (std::size_t i = 0; i < ns.size(); ++i) {
    cv::putText(img, std::to_string(ns[i]), {x_of(i) - 8, area.y + area.height + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                {0, 0, 0}, 1, cv::LINE_AA);
  }
  for (std::size_t r = 0; r < reports.size(); ++r) {
    std::vector<cv::Point> upper, lower, line;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const auto it = reports[r].by_n.find(ns[i]);
      if (it == reports[r].by_n.end()) continue;
      const double s = it->second.std.value_or(0.0);
      line.push_back({x_of(i), y_of(it->second.mean)});
      upper.push_back({x_of(i), y_of(it->second.mean + s)});
      lower.push_back({x_of(i), y_of(it->second.mean - s)});
    }
    if (line.empty()) continue;
    std::vector<cv::Point> band = upper;
    band.insert(band.end(), lower.rbegin(), lower.rend());
    cv::Mat overlay = img.clone();
    cv::fillPoly(overlay, std::vector<std::vector<cv::Point>>{band}, color(r));
    cv::addWeighted(overlay, 0.2, img, 0.8, 0.0, img);
    cv::polylines(img, line, false, color(r), 2, cv::LINE_AA);
    for (const auto& p : line) cv::circle(img, p, 3, color(r), cv::FILLED, cv::LINE_AA);
    cv::putText(img, reports[r].dataset, {area.x + area.width + 20, area.y + 20 + 20 * static_cast<int>(r)},
                cv::FONT_HERSHEY_SIMPLEX, 0.5, color(r), 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

void plot_pca(const PcaExport& p, const std::filesystem::path& path) {
  cv::Mat img(480, 640, CV_8UC3, cv::Scalar(255, 255, 255));
  const cv::Rect area(50, 40, 420, 380);
  draw_frame(img, area, "PC1", "PC2");
  double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  for (std::size_t i = 0; i < p.pca.coords.size(); ++i) {
    const auto& c = p.pca.coords[i];
    const double y = c.size() > 1 ? c[1] : 0.0;
    if (i == 0 || c[0] < lo_x) lo_x = c[0];
    if (i == 0 || c[0] > hi_x) hi_x = c[0];
    if (i == 0 || y < lo_y) lo_y = y;
    if (i == 0 || y > hi_y) hi_y = y;
  }
  const double sx = hi_x > lo_x ? hi_x - lo_x : 1.0;
  const double sy = hi_y > lo_y ? hi_y - lo_y : 1.0;
  std::vector<std::string> legend;
  for (std::size_t i = 0; i < p.pca.coords.size(); ++i) {
    const auto& c = p.pca.coords[i];
    const double y = c.size() > 1 ? c[1] : 0.0;
    const auto& dom = i < p.domains.size() ? p.domains[i] : std::string("?");
    auto it = std::find(legend.begin(), legend.end(), dom);
    if (it == legend.end()) {
      legend.push_back(dom);
      it = legend.end() - 1;
    }
    const cv::Point pt(area.x + 10 + static_cast<int>((c[0] - lo_x) / sx * (area.width - 20)),
                       area.y + area.height - 10 - static_cast<int>((y - lo_y) / sy * (area.height - 20)));
    cv::circle(img, pt, 3, color(static_cast<std::size_t>(it - legend.begin())), cv::FILLED, cv::LINE_AA);
  }
  for (std::size_t i = 0; i < legend.size(); ++i) {
    cv::putText(img, legend[i], {area.x + area.width + 20, area.y + 20 + 20 * static_cast<int>(i)},
                cv::FONT_HERSHEY_SIMPLEX, 0.5, color(i), 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

}  // namespace

std::optional<MeanStd> MetricsReport::mmiou() const {
  if (by_n.empty()) return std::nullopt;
  std::vector<double> runs;
  for (const auto& [n, v] : by_n) runs.push_back(v.mean);
  return eyeadapt::mmiou(runs);
}

std::string format_cell(const MeanStd& v) {
  return v.std ? format_double(v.mean) + kPlusMinus + format_double(*v.std) : format_double(v.mean);
}

std::optional<MeanStd> parse_cell(const std::string& text) {
  if (text.empty()) return std::nullopt;
  MeanStd v;
  const auto pos = text.find(kPlusMinus);
  if (pos == std::string::npos) {
    v.mean = parse_double(text);
  } else {
    v.mean = parse_double(text.substr(0, pos));
    v.std = parse_double(text.substr(pos + 2));
  }
  return v;
}

std::vector<std::filesystem::path> emit_report(const std::vector<MetricsReport>& reports,
                                               const std::vector<PcaExport>& projections,
                                               const std::filesystem::path& out_dir) {
  if (reports.empty()) throw ConfigError("emit_report needs at least one report");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;

  std::set<int> n_set;
  for (const auto& r : reports) {
    check_name(r.dataset);
    for (const auto& [n, v] : r.by_n) n_set.insert(n);
  }
  const std::vector<int> ns(n_set.begin(), n_set.end());

  {
    const auto path = out_dir / "comparison.csv";
    auto out = open_out(path);
    out << "dataset";
    for (int n : ns) out << ",N=" << n;
    out << ",mmiou\n";
    for (const auto& r : reports) {
      if (r.by_n.empty()) continue;
      out << r.dataset;
      for (int n : ns) {
        out << ',';
        if (const auto it = r.by_n.find(n); it != r.by_n.end()) out << format_cell(it->second);
      }
      out << ',';
      if (const auto m = r.mmiou()) out << format_cell(*m);
      out << '\n';
    }
    written.push_back(path);
  }
  {
    const auto path = out_dir / "mu_d.csv";
    auto out = open_out(path);
    out << "dataset,mu_d\n";
    for (const auto& r : reports) {
      if (r.mu_d) out << r.dataset << ',' << format_double(*r.mu_d) << '\n';
    }
    written.push_back(path);
  }
  if (!ns.empty()) {
    const auto path = out_dir / "miou_vs_n.png";
    plot_miou(reports, ns, path);
    written.push_back(path);
  }
  for (const auto& p : projections) {
    check_name(p.pair);
    const auto csv = out_dir / ("pca_" + p.pair + ".csv");
    {
      auto out = open_out(csv);
      out << "id,domain";
      const std::size_t dims = p.pca.coords.empty() ? 0 : p.pca.coords.front().size();
      for (std::size_t c = 0; c < dims; ++c) out << ",pc" << c + 1;
      out << '\n';
      for (std::size_t i = 0; i < p.pca.coords.size(); ++i) {
        out << (i < p.ids.size() ? p.ids[i] : "") << ',' << (i < p.domains.size() ? p.domains[i] : "");
        for (double v : p.pca.coords[i]) out << ',' << format_double(v);
        out << '\n';
      }
    }
    written.push_back(csv);
    const auto ev = out_dir / ("pca_" + p.pair + "_explained.csv");
    {
      auto out = open_out(ev);
      out << "component,explained_ratio\n";
      for (std::size_t c = 0; c < p.pca.explained_ratio.size(); ++c) {
        out << "pc" << c + 1 << ',' << format_double(p.pca.explained_ratio[c]) << '\n';
      }
    }
    written.push_back(ev);
    const auto png = out_dir / ("pca_" + p.pair + ".png");
    plot_pca(p, png);
    written.push_back(png);
  }
  return written;
}

std::vector<MetricsReport> parse_comparison_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv(line);
  if (header.size() < 2 || header.front() != "dataset" || header.back() != "mmiou") {
    throw FormatError(path.filename().string(), "unexpected comparison header");
  }
  std::vector<int> ns;
  for (std::size_t i = 1; i + 1 < header.size(); ++i) {
    if (header[i].rfind("N=", 0) != 0) throw FormatError(path.filename().string(), "bad column " + header[i]);
    ns.push_back(std::stoi(header[i].substr(2)));
  }
  std::vector<MetricsReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw FormatError(path.filename().string(), "row width mismatch");
    MetricsReport r;
    r.dataset = cells.front();
    for (std::size_t i = 0; i < ns.size(); ++i) {
      if (auto v = parse_cell(cells[i + 1])) r.by_n[ns[i]] = *v;
    }
    out.push_back(std::move(r));
  }
  const auto mu_path = path.parent_path() / "mu_d.csv";
  if (std::filesystem::exists(mu_path)) {
    std::ifstream mu(mu_path);
    std::getline(mu, line);
    while (std::getline(mu, line)) {
      const auto cells = split_csv(line);
      if (cells.size() != 2 || cells[1].empty()) continue;
      auto it = std::find_if(out.begin(), out.end(), [&](const MetricsReport& r) { return r.dataset == cells[0]; });
      if (it == out.end()) {
        out.emplace_back().dataset = cells[0];
        it = std::prev(out.end());
      }
      it->mu_d = parse_double(cells[1]);
    }
  }
  return out;
}

}  // namespace eyeadapt
