#include "eyeadapt/losses.hpp"

#include <cmath>
#include <limits>

#include "eyeadapt/errors.hpp"

namespace eyeadapt {

namespace F = torch::nn::functional;

namespace {

torch::Tensor as_batch(const torch::Tensor& x) {
  if (x.dim() == 2) return x.unsqueeze(0).unsqueeze(0);
  if (x.dim() == 3) return x.unsqueeze(0);
  return x;
}

void same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw ConfigError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                      c10::str(b.sizes()));
  }
}

void check_masks(const torch::Tensor& masks, int classes) {
  if (masks.numel() == 0) throw ConfigError("empty mask batch");
  const auto hi = masks.max().item<std::int64_t>();
  const auto lo = masks.min().item<std::int64_t>();
  if (lo < 0 || hi >= classes) {
    throw ConfigError("mask value " + std::to_string(hi >= classes ? hi : lo) + " outside class range (K=" +
                      std::to_string(classes) + ")");
  }
}

torch::Tensor one_hot(const torch::Tensor& masks, int classes, torch::ScalarType dtype) {
  return F::one_hot(masks.to(torch::kInt64), classes).permute({0, 3, 1, 2}).to(dtype);
}

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

}  // namespace

void validate(const LossWeights& w) {
  const std::pair<const char*, double> items[] = {
      {"cycle", w.cycle}, {"identity", w.identity}, {"edge", w.edge},         {"mean", w.mean},
      {"var", w.var},     {"gdl", w.gdl},           {"bal", w.bal},           {"surface", w.surface},
      {"bal_beta", w.bal_beta}, {"grl_scale", w.grl_scale}, {"margin", w.margin}};
  for (const auto& [name, v] : items) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string("loss weight '") + name + "' must be finite and >= 0");
  }
  if (!(w.margin > 0.0)) throw ConfigError("contrastive margin must be positive");
}

LossWeights cgan_weights(LossWeights w) {
  w.edge = 0.0;
  w.mean = 0.0;
  w.var = 0.0;
  return w;
}

// ---------------------------------------------------------------------------

AdversarialLoss adversarial_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  return {F::softplus(-d_real).mean() + F::softplus(d_fake).mean(), F::softplus(-d_fake).mean()};
}

torch::Tensor cycle_loss(const torch::Tensor& s, const torch::Tensor& recovered_s, const torch::Tensor& r,
                         const torch::Tensor& recovered_r) {
  same_shape(s, recovered_s, "cycle_loss");
  same_shape(r, recovered_r, "cycle_loss");
  return l1(recovered_s, s) + l1(recovered_r, r);
}

torch::Tensor identity_loss(const torch::Tensor& s, const torch::Tensor& g_rs_of_s, const torch::Tensor& r,
                            const torch::Tensor& g_sr_of_r) {
  same_shape(s, g_rs_of_s, "identity_loss");
  same_shape(r, g_sr_of_r, "identity_loss");
  return l1(g_rs_of_s, s) + l1(g_sr_of_r, r);
}

torch::Tensor sobel_edges(const torch::Tensor& image) {
  const auto x = as_batch(image);
  if (x.size(1) != 1) throw ConfigError("sobel_edges expects single-channel images");
  const auto opts = torch::TensorOptions().dtype(x.dtype()).device(x.device());
  const auto kx = torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, opts).view({1, 1, 3, 3});
  const auto ky = kx.transpose(2, 3);
  const auto padded = F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  return F::conv2d(padded, torch::cat({kx, ky}, 0));
}

torch::Tensor edge_retaining_loss(const torch::Tensor& s, const torch::Tensor& t_sr, const torch::Tensor& rec_s,
                                  const torch::Tensor& r, const torch::Tensor& t_rs, const torch::Tensor& rec_r) {
  same_shape(s, t_sr, "edge_retaining_loss");
  same_shape(s, rec_s, "edge_retaining_loss");
  same_shape(r, t_rs, "edge_retaining_loss");
  same_shape(r, rec_r, "edge_retaining_loss");
  const auto e_tsr = sobel_edges(t_sr);
  const auto e_trs = sobel_edges(t_rs);
  return l1(e_tsr, sobel_edges(s)) + l1(e_tsr, sobel_edges(rec_s)) + l1(e_trs, sobel_edges(r)) +
         l1(e_trs, sobel_edges(rec_r));
}

ClassStats class_stats(const Image& image, const Mask& mask, int classes) {
  if (!image.same_shape(mask)) throw ConfigError("class_stats: image and mask dims differ");
  ClassStats st;
  st.mean.assign(classes, 0.0);
  st.var.assign(classes, 0.0);
  st.count.assign(classes, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int k = mask.data[i];
    if (k >= classes) throw ConfigError("class_stats: mask value " + std::to_string(k) + " >= K");
    st.mean[k] += image.data[i];
    ++st.count[k];
  }
  for (int k = 0; k < classes; ++k) {
    if (st.count[k] > 0) st.mean[k] /= static_cast<double>(st.count[k]);
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int k = mask.data[i];
    const double d = image.data[i] - st.mean[k];
    st.var[k] += d * d;
  }
  for (int k = 0; k < classes; ++k) {
    if (st.count[k] > 0) st.var[k] /= static_cast<double>(st.count[k]);
  }
  return st;
}

ClassStatsTensor class_stats(const torch::Tensor& images, const torch::Tensor& masks, int classes) {
  const auto x = as_batch(images);
  check_masks(masks, classes);
  if (x.size(0) != masks.size(0) || x.size(2) != masks.size(1) || x.size(3) != masks.size(2)) {
    throw ConfigError("class_stats: image and mask dims differ");
  }
  const auto oh = one_hot(masks, classes, x.scalar_type()).flatten(2);  // [B, K, P]
  const auto px = x.flatten(2);                                          // [B, 1, P]
  const auto count = oh.sum(-1);
  const auto safe = count.clamp_min(1.0);
  const auto mean = (px * oh).sum(-1) / safe;
  const auto var = ((px - mean.unsqueeze(-1)).pow(2) * oh).sum(-1) / safe;
  return {mean, var, count};
}

namespace {

torch::Tensor color_stat_loss(bool use_var, const torch::Tensor& t_sr, const torch::Tensor& mask_s,
                              const torch::Tensor& r, const torch::Tensor& mask_r, const torch::Tensor& t_rs,
                              const torch::Tensor& s, int classes) {
  const auto a = class_stats(t_sr, mask_s, classes);
  const auto b = class_stats(r, mask_r, classes);
  const auto c = class_stats(t_rs, mask_r, classes);
  const auto d = class_stats(s, mask_s, classes);
  if (a.mean.size(0) != b.mean.size(0)) throw ConfigError("color loss: translated and target batch sizes differ");
  const auto pick = [use_var](const ClassStatsTensor& st) { return use_var ? st.var : st.mean; };
  const auto both = (a.count > 0).logical_and(b.count > 0).to(a.mean.scalar_type());
  const auto term_sr = ((pick(a) - pick(b)).abs() * both).sum(1);
  const auto both_rs = (c.count > 0).logical_and(d.count > 0).to(a.mean.scalar_type());
  const auto term_rs = ((pick(c) - pick(d)).abs() * both_rs).sum(1);
  return (term_sr + term_rs).mean();
}

}  // namespace

torch::Tensor color_mean_loss(const torch::Tensor& t_sr, const torch::Tensor& mask_s, const torch::Tensor& r,
                              const torch::Tensor& mask_r, const torch::Tensor& t_rs, const torch::Tensor& s,
                              int classes) {
  return color_stat_loss(false, t_sr, mask_s, r, mask_r, t_rs, s, classes);
}

torch::Tensor color_var_loss(const torch::Tensor& t_sr, const torch::Tensor& mask_s, const torch::Tensor& r,
                             const torch::Tensor& mask_r, const torch::Tensor& t_rs, const torch::Tensor& s,
                             int classes) {
  return color_stat_loss(true, t_sr, mask_s, r, mask_r, t_rs, s, classes);
}

WeightedLoss total_srcgan_loss(const SrcganParts& p, const LossWeights& w) {
  const std::pair<const char*, torch::Tensor> terms[] = {
      {"adv_sr", p.adv_sr},
      {"adv_rs", p.adv_rs},
      {"cycle", p.cycle * w.cycle},
      {"identity", p.identity * w.identity},
      {"edge", p.edge * w.edge},
      {"mean", p.mean * w.mean},
      {"var", p.var * w.var}};
  WeightedLoss out;
  for (const auto& [name, t] : terms) {
    out.total = out.total.defined() ? out.total + t : t;
    out.breakdown[name] = t.item<double>();
  }
  return out;
}

// ---------------------------------------------------------------------------

torch::Tensor generalized_dice_loss(const torch::Tensor& probs, const torch::Tensor& masks, int classes) {
  check_masks(masks, classes);
  if (probs.size(1) != classes) throw ConfigError("generalized_dice_loss: probs have wrong class count");
  const auto g = one_hot(masks, classes, probs.scalar_type());
  same_shape(g, probs, "generalized_dice_loss");
  const auto vol = g.sum({0, 2, 3});
  const auto present = vol > 0;
  if (!present.any().item<bool>()) throw ConfigError("generalized_dice_loss: no class present in mask");
  const auto w = torch::where(present, 1.0 / vol.clamp_min(1.0).pow(2), torch::zeros_like(vol));
  const auto inter = (g * probs).sum({0, 2, 3});
  const auto uni = (g + probs).sum({0, 2, 3});
  return 1.0 - 2.0 * (w * inter).sum() / (w * uni).sum();
}

Mask boundary_indicator(const Mask& mask) {
  const int h = mask.height;
  const int w = mask.width;
  Mask edge(h, w, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto v = mask.at(r, c);
      if ((r > 0 && mask.at(r - 1, c) != v) || (r + 1 < h && mask.at(r + 1, c) != v) ||
          (c > 0 && mask.at(r, c - 1) != v) || (c + 1 < w && mask.at(r, c + 1) != v)) {
        edge.at(r, c) = 1;
      }
    }
  }
  for (int iter = 0; iter < 2; ++iter) {
    Mask grown(h, w, 0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        if (!edge.at(r, c)) continue;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr >= 0 && rr < h && cc >= 0 && cc < w) grown.at(rr, cc) = 1;
          }
        }
      }
    }
    edge = std::move(grown);
  }
  return edge;
}

namespace {

Mask mask_slice(const torch::Tensor& masks, std::int64_t b) {
  const auto m = masks[b].to(torch::kCPU, torch::kInt64).contiguous();
  Mask out(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)));
  const auto* src = m.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<std::uint8_t>(src[i]);
  return out;
}

}  // namespace

torch::Tensor boundary_weight_map(const torch::Tensor& masks, double beta) {
  const auto b = masks.size(0);
  auto out = torch::empty({b, masks.size(1), masks.size(2)}, torch::kFloat64);
  auto* dst = out.data_ptr<double>();
  const auto plane = static_cast<std::size_t>(masks.size(1) * masks.size(2));
  for (std::int64_t i = 0; i < b; ++i) {
    const auto edge = boundary_indicator(mask_slice(masks, i));
    for (std::size_t p = 0; p < plane; ++p) dst[i * plane + p] = 1.0 + beta * edge.data[p];
  }
  return out;
}

torch::Tensor boundary_aware_loss(const torch::Tensor& logits, const torch::Tensor& masks, double beta) {
  check_masks(masks, static_cast<int>(logits.size(1)));
  const auto ce = F::cross_entropy(logits, masks.to(torch::kInt64), F::CrossEntropyFuncOptions().reduction(torch::kNone));
  const auto w = boundary_weight_map(masks, beta).to(logits.options());
  return (w * ce).mean();
}

namespace {

// Squared distance transform of a sampled function along one line.
void dt1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    auto meet = [&](int p) { return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p)); };
    double s = meet(v[k]);
    while (s <= z[k]) {
      --k;
      s = meet(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

Grid<double> distance_transform(const Mask& inside) {
  const int h = inside.height;
  const int w = inside.width;
  const double big = 1e20;
  Grid<double> g(h, w, big);
  bool any = false;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    if (inside.data[i]) {
      g.data[i] = 0.0;
      any = true;
    }
  }
  if (!any) return Grid<double>(h, w, std::numeric_limits<double>::infinity());
  const int n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int c = 0; c < w; ++c) {
    f.resize(h);
    d.resize(h);
    for (int r = 0; r < h; ++r) f[r] = g.at(r, c);
    dt1d(f, d, v, z);
    for (int r = 0; r < h; ++r) g.at(r, c) = d[r];
  }
  for (int r = 0; r < h; ++r) {
    f.resize(w);
    d.resize(w);
    for (int c = 0; c < w; ++c) f[c] = g.at(r, c);
    dt1d(f, d, v, z);
    for (int c = 0; c < w; ++c) g.at(r, c) = std::sqrt(d[c]);
  }
  return g;
}

torch::Tensor surface_heat_maps(const torch::Tensor& masks, int classes) {
  check_masks(masks, classes);
  const auto b = masks.size(0);
  const auto h = masks.size(1);
  const auto w = masks.size(2);
  const double diag = std::sqrt(double(h) * h + double(w) * w);
  auto out = torch::empty({b, classes, h, w}, torch::kFloat64);
  auto* dst = out.data_ptr<double>();
  const auto plane = static_cast<std::size_t>(h * w);
  for (std::int64_t i = 0; i < b; ++i) {
    const auto m = mask_slice(masks, i);
    for (int k = 0; k < classes; ++k) {
      Mask inside(m.height, m.width, 0);
      bool any = false;
      for (std::size_t p = 0; p < plane; ++p) {
        inside.data[p] = m.data[p] == k;
        any = any || inside.data[p];
      }
      double* slot = dst + (i * classes + k) * plane;
      if (!any) {
        std::fill(slot, slot + plane, 1.0);
        continue;
      }
      const auto dt = distance_transform(inside);
      for (std::size_t p = 0; p < plane; ++p) slot[p] = dt.data[p] / diag;
    }
  }
  return out;
}

torch::Tensor surface_loss(const torch::Tensor& probs, const torch::Tensor& masks, int classes) {
  if (probs.size(1) != classes) throw ConfigError("surface_loss: probs have wrong class count");
  const auto heat = surface_heat_maps(masks, classes).to(probs.options());
  same_shape(heat, probs, "surface_loss");
  return (probs * heat).mean();
}

torch::Tensor segmentation_loss(const torch::Tensor& logits, const torch::Tensor& masks, const LossWeights& w) {
  const int k = static_cast<int>(logits.size(1));
  const auto probs = torch::softmax(logits, 1);
  return w.gdl * generalized_dice_loss(probs, masks, k) + w.bal * boundary_aware_loss(logits, masks, w.bal_beta) +
         w.surface * surface_loss(probs, masks, k);
}

// ---------------------------------------------------------------------------

double contrastive_loss(double dist, bool same_domain, double margin) {
  if (!(dist >= 0.0)) throw ConfigError("contrastive_loss: distance must be non-negative");
  if (same_domain) return dist * dist;
  const double gap = std::max(0.0, margin - dist);
  return gap * gap;
}

torch::Tensor contrastive_loss(const torch::Tensor& dist, const torch::Tensor& same, double margin) {
  if (dist.numel() > 0 && dist.min().item<double>() < 0.0) {
    throw ConfigError("contrastive_loss: distance must be non-negative");
  }
  const auto y = same.to(dist.scalar_type());
  return (y * dist.pow(2) + (1.0 - y) * torch::relu(margin - dist).pow(2)).mean();
}

torch::Tensor embedding_distance(const torch::Tensor& a, const torch::Tensor& b) {
  same_shape(a, b, "embedding_distance");
  return ((a - b).pow(2).sum(1) + 1e-12).sqrt();
}

torch::Tensor domain_bce_loss(const torch::Tensor& pred, const torch::Tensor& labels) {
  same_shape(pred, labels, "domain_bce_loss");
  const auto p = pred.clamp(1e-7, 1.0 - 1e-7);
  const auto l = labels.to(pred.scalar_type());
  return -(l * p.log() + (1.0 - l) * (1.0 - p).log()).mean();
}

}  // namespace eyeadapt
