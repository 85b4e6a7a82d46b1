#pragma once

#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "eyeadapt/datakit.hpp"

namespace eyeadapt {

struct LossWeights {
  // translator objective
  double cycle = 10.0;
  double identity = 10.0;
  double edge = 0.1;
  double mean = 0.0;
  double var = 60.0;
  // segmentation objective
  double gdl = 1.0;
  double bal = 1.0;
  double surface = 0.5;
  double bal_beta = 10.0;
  double grl_scale = 0.3;
  // siamese
  double margin = 1.0;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Throws ConfigError naming the offending weight.
void validate(const LossWeights& w);

/// Same weights with the structure-retaining terms switched off.
LossWeights cgan_weights(LossWeights w);

// ---------------------------------------------------------------------------
// Translator losses. Image tensors are [B, 1, H, W].

struct AdversarialLoss {
  torch::Tensor discriminator;
  torch::Tensor generator;
};

/// Standard GAN objective on logits; the generator term is the non-saturating form.
AdversarialLoss adversarial_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);

torch::Tensor cycle_loss(const torch::Tensor& s, const torch::Tensor& recovered_s, const torch::Tensor& r,
                         const torch::Tensor& recovered_r);

torch::Tensor identity_loss(const torch::Tensor& s, const torch::Tensor& g_rs_of_s, const torch::Tensor& r,
                            const torch::Tensor& g_sr_of_r);

/// 3x3 Sobel responses with replicate padding. Accepts [H, W], [1, H, W] or
/// [B, 1, H, W]; returns [B, 2, H, W] holding (g_x, g_y).
torch::Tensor sobel_edges(const torch::Tensor& image);

torch::Tensor edge_retaining_loss(const torch::Tensor& s, const torch::Tensor& t_sr, const torch::Tensor& rec_s,
                                  const torch::Tensor& r, const torch::Tensor& t_rs, const torch::Tensor& rec_r);

/// Per-class pixel statistics of one image.
struct ClassStats {
  std::vector<double> mean;
  std::vector<double> var;  // population variance
  std::vector<long> count;

  bool present(int k) const { return count[k] > 0; }
};

ClassStats class_stats(const Image& image, const Mask& mask, int classes = kNumClasses);

/// Differentiable batch form: mean, var and count, each [B, K]. Absent
/// classes have count 0 and mean/var 0.
struct ClassStatsTensor {
  torch::Tensor mean;
  torch::Tensor var;
  torch::Tensor count;
};

ClassStatsTensor class_stats(const torch::Tensor& images, const torch::Tensor& masks, int classes);

/// Batch-averaged sum over classes of |stat(t_sr) - stat(r)| + |stat(t_rs) - stat(s)|.
/// t_sr and s are described by mask_s; r and t_rs by mask_r. Classes absent
/// from either operand of a pair are skipped.
torch::Tensor color_mean_loss(const torch::Tensor& t_sr, const torch::Tensor& mask_s, const torch::Tensor& r,
                              const torch::Tensor& mask_r, const torch::Tensor& t_rs, const torch::Tensor& s,
                              int classes);
torch::Tensor color_var_loss(const torch::Tensor& t_sr, const torch::Tensor& mask_s, const torch::Tensor& r,
                             const torch::Tensor& mask_r, const torch::Tensor& t_rs, const torch::Tensor& s,
                             int classes);

struct SrcganParts {
  torch::Tensor adv_sr;
  torch::Tensor adv_rs;
  torch::Tensor cycle;
  torch::Tensor identity;
  torch::Tensor edge;
  torch::Tensor mean;
  torch::Tensor var;
};

struct WeightedLoss {
  torch::Tensor total;
  std::map<std::string, double> breakdown;  // weighted contribution per term
};

WeightedLoss total_srcgan_loss(const SrcganParts& parts, const LossWeights& w);

// ---------------------------------------------------------------------------
// Segmentation losses. probs/logits are [B, K, H, W], masks [B, H, W] int64.

torch::Tensor generalized_dice_loss(const torch::Tensor& probs, const torch::Tensor& masks, int classes);

/// 1 on pixels within two 3x3 dilations of a class transition, 0 elsewhere.
Mask boundary_indicator(const Mask& mask);
/// 1 + beta * boundary_indicator, [B, H, W] float.
torch::Tensor boundary_weight_map(const torch::Tensor& masks, double beta);
torch::Tensor boundary_aware_loss(const torch::Tensor& logits, const torch::Tensor& masks, double beta = 10.0);

/// Exact Euclidean distance from every pixel to the nearest pixel where
/// `inside` is nonzero. Pixels are unit spaced. An empty region yields +inf.
Grid<double> distance_transform(const Mask& inside);
/// Per-class distance maps normalized by the image diagonal, [B, K, H, W].
/// A class missing from a mask gets a map of ones.
torch::Tensor surface_heat_maps(const torch::Tensor& masks, int classes);
torch::Tensor surface_loss(const torch::Tensor& probs, const torch::Tensor& masks, int classes);

/// w_gdl * GDL + w_bal * BAL + w_surf * surface on the same logits.
torch::Tensor segmentation_loss(const torch::Tensor& logits, const torch::Tensor& masks, const LossWeights& w);

// ---------------------------------------------------------------------------
// Metric learning and domain classification

/// same -> d^2, different -> max(0, m - d)^2. Throws if d < 0.
double contrastive_loss(double dist, bool same_domain, double margin);
/// Batch mean; `same` holds 1 for same-domain pairs, 0 otherwise.
torch::Tensor contrastive_loss(const torch::Tensor& dist, const torch::Tensor& same, double margin);

/// Row-wise L2 distance, smoothed at zero so its gradient stays finite.
torch::Tensor embedding_distance(const torch::Tensor& a, const torch::Tensor& b);

/// Binary cross entropy on probabilities clamped to [1e-7, 1 - 1e-7], batch mean.
torch::Tensor domain_bce_loss(const torch::Tensor& pred, const torch::Tensor& labels);

}  // namespace eyeadapt
