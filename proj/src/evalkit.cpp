#include "eyeadapt/evalkit.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "eyeadapt/errors.hpp"

namespace eyeadapt {

double miou(const Mask& pred, const Mask& gt, int classes) {
  if (!pred.same_shape(gt)) throw ConfigError("miou: dimension mismatch");
  std::vector<long> inter(classes, 0), in_pred(classes, 0), in_gt(classes, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int p = pred.data[i];
    const int g = gt.data[i];
    if (p >= classes || g >= classes) throw ConfigError("miou: class id outside range");
    ++in_pred[p];
    ++in_gt[g];
    if (p == g) ++inter[p];
  }
  double sum = 0.0;
  int used = 0;
  for (int k = 0; k < classes; ++k) {
    const long uni = in_pred[k] + in_gt[k] - inter[k];
    if (uni == 0) continue;
    sum += static_cast<double>(inter[k]) / static_cast<double>(uni);
    ++used;
  }
  return used == 0 ? 1.0 : sum / used;
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("mean of an empty list");
  MeanStd out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

MeanStd mmiou(const std::vector<double>& runs) {
  if (runs.empty()) throw ConfigError("mmiou needs at least one run");
  return mean_std(runs);
}

PcaResult pca_project(const std::vector<std::vector<double>>& points, int dims) {
  return pca_project(points, dims, std::vector<bool>(points.size(), true));
}

PcaResult pca_project(const std::vector<std::vector<double>>& points, int dims, const std::vector<bool>& fit_on) {
  if (fit_on.size() != points.size()) throw ConfigError("pca fit selector size mismatch");
  const auto n_fit = static_cast<Eigen::Index>(std::count(fit_on.begin(), fit_on.end(), true));
  if (n_fit < 2) throw ConfigError("pca needs at least 2 points");
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto d = static_cast<Eigen::Index>(points.front().size());
  if (dims < 1 || dims > d) throw ConfigError("pca dims must lie in [1, " + std::to_string(d) + "]");
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(points[i].size()) != d) throw ConfigError("pca points differ in dimension");
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = points[i][j];
  }
  Eigen::MatrixXd fit(n_fit, d);
  for (Eigen::Index i = 0, r = 0; i < n; ++i) {
    if (fit_on[i]) fit.row(r++) = x.row(i);
  }
  const Eigen::RowVectorXd mu = fit.colwise().mean();
  x.rowwise() -= mu;
  fit.rowwise() -= mu;
  const Eigen::MatrixXd cov = (fit.transpose() * fit) / static_cast<double>(n_fit - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0);
  const double total = vals.sum();
  if (!(total > 0.0)) throw ConfigError("pca input has zero variance");

  PcaResult res;
  res.mean.assign(mu.data(), mu.data() + d);
  Eigen::MatrixXd basis(d, dims);
  for (int c = 0; c < dims; ++c) {
    const Eigen::Index src = d - 1 - c;  // eigenvalues come in ascending order
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    basis.col(c) = v;
    res.components.emplace_back(v.data(), v.data() + d);
    res.explained_ratio.push_back(vals(src) / total);
  }
  const Eigen::MatrixXd proj = x * basis;
  for (Eigen::Index i = 0; i < n; ++i) {
    res.coords.emplace_back(dims);
    for (int c = 0; c < dims; ++c) res.coords.back()[c] = proj(i, c);
  }
  return res;
}

}  // namespace eyeadapt
