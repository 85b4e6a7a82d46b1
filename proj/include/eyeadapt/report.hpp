#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eyeadapt/evalkit.hpp"

namespace eyeadapt {

/// Results for one training dataset (e.g. raw source, CGAN, SRCGAN, SRCGAN-S).
struct MetricsReport {
  std::string dataset;
  std::map<int, MeanStd> by_n;  // real-image count N -> fold mIoU mean and std
  std::optional<double> mu_d;
  int folds = 3;

  /// mmIoU over the N instances present.
  std::optional<MeanStd> mmiou() const;
};

/// 2-D latent projection of one source/target pair, ready for export.
struct PcaExport {
  std::string pair;
  std::vector<std::string> ids;
  std::vector<std::string> domains;
  PcaResult pca;
};

/// "mean±std", or "mean" when there is no std.
std::string format_cell(const MeanStd& v);
std::optional<MeanStd> parse_cell(const std::string& text);

/// Writes comparison.csv, mu_d.csv, pca_<pair>.csv, pca_<pair>_explained.csv,
/// miou_vs_n.png and pca_<pair>.png into `out_dir`. Returns the written paths.
std::vector<std::filesystem::path> emit_report(const std::vector<MetricsReport>& reports,
                                               const std::vector<PcaExport>& projections,
                                               const std::filesystem::path& out_dir);

/// Reads comparison.csv (and mu_d.csv next to it, if present).
std::vector<MetricsReport> parse_comparison_csv(const std::filesystem::path& path);

}  // namespace eyeadapt
