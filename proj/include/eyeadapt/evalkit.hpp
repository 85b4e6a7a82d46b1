#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eyeadapt/datakit.hpp"

namespace eyeadapt {

/// Mean over classes of |pred ∩ gt| / |pred ∪ gt|. Classes absent from both
/// masks are left out; a class present in only one contributes 0.
double miou(const Mask& pred, const Mask& gt, int classes = kNumClasses);

struct MeanStd {
  double mean = 0.0;
  std::optional<double> std;  // sample std (n - 1); absent for one value
};

/// Arithmetic mean and Bessel-corrected standard deviation.
MeanStd mean_std(const std::vector<double>& values);
/// mmIoU over dataset instances. Throws on an empty list.
MeanStd mmiou(const std::vector<double>& runs);

struct PcaResult {
  std::vector<std::vector<double>> coords;  // one row per input point
  std::vector<std::vector<double>> components;  // unit principal axes, descending variance
  std::vector<double> explained_ratio;
  std::vector<double> mean;
};

/// Principal component projection onto the top `dims` axes. Each component's
/// sign is fixed so its largest-magnitude entry is positive.
PcaResult pca_project(const std::vector<std::vector<double>>& points, int dims = 2);
/// Fits on the points with `fit_on[i]` set and projects every point.
PcaResult pca_project(const std::vector<std::vector<double>>& points, int dims, const std::vector<bool>& fit_on);

}  // namespace eyeadapt
