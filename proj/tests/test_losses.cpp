#include "doctest_torch.hpp"

#include <cmath>
#include <numbers>

#include <torch/torch.h>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/losses.hpp"
#include "eyeadapt/tensors.hpp"
#include "oracles.hpp"

using namespace eyeadapt;
using doctest::Approx;

namespace {

const auto f64 = torch::kFloat64;

double val(const torch::Tensor& t) { return t.item<double>(); }

torch::Tensor onehot(const torch::Tensor& m, int k = kNumClasses) {
  return torch::one_hot(m, k).permute({0, 3, 1, 2}).to(f64);
}

}  // namespace

TEST_CASE("adversarial loss") {
  SUBCASE("confident correct discriminator has near-zero loss") {
    const auto l = adversarial_loss(torch::full({4}, 40.0, f64), torch::full({4}, -40.0, f64));
    CHECK(val(l.discriminator) < 1e-12);
  }
  SUBCASE("p = 0.5 everywhere gives 2 ln 2") {
    const auto z = torch::zeros({6}, f64);
    CHECK(val(adversarial_loss(z, z).discriminator) == Approx(2 * std::numbers::ln2).epsilon(1e-12));
    CHECK(val(adversarial_loss(z, z).generator) == Approx(std::numbers::ln2).epsilon(1e-12));
  }
}

TEST_CASE("cycle and identity losses") {
  const auto s = torch::rand({2, 1, 8, 8}, f64), r = torch::rand({2, 1, 8, 8}, f64);
  CHECK(val(cycle_loss(s, s, r, r)) == 0.0);
  CHECK(val(cycle_loss(s, s + 0.1, r, r + 0.1)) == Approx(0.2).epsilon(1e-12));
  CHECK(val(identity_loss(s, s, r, r)) == 0.0);
  CHECK(val(identity_loss(s, s + 0.05, r, r)) == Approx(0.05).epsilon(1e-12));
  CHECK_THROWS_AS(cycle_loss(s, torch::rand({2, 1, 4, 4}, f64), r, r), ConfigError);
}

TEST_CASE("sobel edges") {
  SUBCASE("constant image has no response") {
    CHECK(val(sobel_edges(torch::full({1, 1, 9, 7}, 0.3, f64)).abs().max()) <= 1e-12);
  }
  SUBCASE("vertical step edge gives 4 x step height on both sides of the step") {
    const int h = 8, w = 10, c = 5;
    auto img = torch::zeros({h, w}, f64);
    img.index_put_({torch::indexing::Slice(), torch::indexing::Slice(c, w)}, 0.5);
    const auto e = sobel_edges(img);
    REQUIRE(e.sizes() == torch::IntArrayRef{1, 2, h, w});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double want = (x == c - 1 || x == c) ? 4 * 0.5 : 0.0;
        CHECK(val(e[0][0][y][x]) == Approx(want).epsilon(1e-12));
        CHECK(val(e[0][1][y][x]) == Approx(0.0));
      }
    }
  }
  SUBCASE("matches the direct-correlation oracle") {
    torch::manual_seed(2);
    const auto img = torch::rand({6, 9}, f64);
    std::vector<double> px(img.data_ptr<double>(), img.data_ptr<double>() + img.numel());
    const auto [gx, gy] = oracle::sobel(px, 6, 9);
    const auto e = sobel_edges(img).contiguous();
    for (int i = 0; i < 54; ++i) {
      CHECK(e[0][0].view(-1)[i].item<double>() == Approx(gx[i]).epsilon(1e-12));
      CHECK(e[0][1].view(-1)[i].item<double>() == Approx(gy[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("edge retaining loss") {
  const auto s = torch::rand({2, 1, 8, 8}, f64), r = torch::rand({2, 1, 8, 8}, f64);
  CHECK(val(edge_retaining_loss(s, s, s, r, r, r)) == 0.0);
  CHECK(val(edge_retaining_loss(s, s + 0.3, s - 0.1, r, r + 0.2, r)) <= 1e-12);
  CHECK(val(edge_retaining_loss(s, s.flip(3), s, r, r, r)) > 0.0);
}

TEST_CASE("class statistics") {
  SUBCASE("constant region") {
    Image img(4, 4, 0.5f);
    Mask m(4, 4, 1);
    const auto st = class_stats(img, m);
    CHECK(st.mean[1] == Approx(0.5));
    CHECK(st.var[1] == 0.0);
    CHECK_FALSE(st.present(0));
  }
  SUBCASE("two-point region: mean 0.5, population variance 0.25") {
    Image img(2, 2);
    img.data = {0.f, 1.f, 1.f, 0.f};
    Mask m(2, 2, 2);
    const auto st = class_stats(img, m);
    CHECK(st.mean[2] == Approx(0.5));
    CHECK(st.var[2] == Approx(0.25));
  }
  SUBCASE("tensor form agrees with the brute-force oracle") {
    torch::manual_seed(3);
    for (int t = 0; t < 10; ++t) {
      const auto img = torch::rand({1, 1, 7, 5}, f64);
      const auto m = torch::randint(0, kNumClasses, {1, 7, 5}, torch::kInt64);
      std::vector<double> px(img.data_ptr<double>(), img.data_ptr<double>() + 35);
      std::vector<int> mk(m.data_ptr<std::int64_t>(), m.data_ptr<std::int64_t>() + 35);
      const auto want = oracle::class_stats(px, mk, kNumClasses);
      const auto got = class_stats(img, m, kNumClasses);
      for (int k = 0; k < kNumClasses; ++k) {
        CHECK(got.count[0][k].item<double>() == want.count[k]);
        CHECK(std::abs(got.mean[0][k].item<double>() - want.mean[k]) <= 1e-10);
        CHECK(std::abs(got.var[0][k].item<double>() - want.var[k]) <= 1e-10);
      }
    }
  }
}

TEST_CASE("colour mean and variance losses") {
  torch::manual_seed(4);
  const auto m = torch::randint(0, kNumClasses, {1, 8, 8}, torch::kInt64);
  const auto r = torch::rand({1, 1, 8, 8}, f64) * 0.5;
  const auto s = torch::rand({1, 1, 8, 8}, f64);
  CHECK(val(color_mean_loss(r, m, r, m, s, s, kNumClasses)) == 0.0);
  CHECK(val(color_var_loss(r, m, r, m, s, s, kNumClasses)) == 0.0);

  SUBCASE("one class shifted by 0.2 in one direction") {
    const auto shifted = torch::where(m.unsqueeze(1) == 2, r + 0.2, r);
    CHECK(val(color_mean_loss(shifted, m, r, m, s, s, kNumClasses)) == Approx(0.2).epsilon(1e-12));
    CHECK(val(color_var_loss(shifted, m, r, m, s, s, kNumClasses)) <= 1e-12);
  }
  SUBCASE("classes absent on one side are skipped") {
    const auto only0 = torch::zeros({1, 8, 8}, torch::kInt64);
    const auto both = torch::where(torch::arange(64).view({1, 8, 8}) < 32, 0, 1);
    const auto a = torch::full({1, 1, 8, 8}, 0.3, f64), b = torch::full({1, 1, 8, 8}, 0.9, f64);
    // class 1 exists only under `both`; only class 0 contributes
    CHECK(val(color_mean_loss(a, only0, b, both, a, a, kNumClasses)) == Approx(0.6 + 0.0).epsilon(1e-12));
  }
}

TEST_CASE("total srcgan objective") {
  const auto one = torch::ones({}, f64);
  SrcganParts p{one * 0.7, one * 0.4, one, one, one, one, one};
  SUBCASE("all weights zero leaves the adversarial terms") {
    LossWeights w;
    w.cycle = w.identity = w.edge = w.mean = w.var = 0.0;
    CHECK(val(total_srcgan_loss(p, w).total) == Approx(1.1));
  }
  SUBCASE("default weights on unit components") {
    const auto out = total_srcgan_loss(p, LossWeights{});
    CHECK(val(out.total) == Approx(10 + 10 + 0.1 + 0 + 60 + 1.1));
    CHECK(out.breakdown.at("var") == Approx(60.0));
    CHECK(out.breakdown.at("mean") == 0.0);
  }
  SUBCASE("linear in each coefficient") {
    SrcganParts q{one * 0.2, one * 0.3, one * 1.5, one * 2.5, one * 0.25, one * 3.0, one * 0.125};
    LossWeights base;
    const double t0 = val(total_srcgan_loss(q, base).total);
    auto bump = base;
    bump.var += 2.0;
    CHECK(val(total_srcgan_loss(q, bump).total) - t0 == Approx(2.0 * 0.125));
    bump = base;
    bump.cycle += 3.0;
    CHECK(val(total_srcgan_loss(q, bump).total) - t0 == Approx(3.0 * 1.5));
  }
  SUBCASE("cgan weights drop the structure terms") {
    const auto w = cgan_weights(LossWeights{});
    CHECK(w.edge == 0.0);
    CHECK(w.mean == 0.0);
    CHECK(w.var == 0.0);
    CHECK(w.cycle == 10.0);
  }
  SUBCASE("negative weights are rejected") {
    LossWeights w;
    w.edge = -1;
    CHECK_THROWS_AS(validate(w), ConfigError);
  }
}

TEST_CASE("generalized dice loss") {
  torch::manual_seed(5);
  const auto m = torch::randint(0, kNumClasses, {2, 8, 8}, torch::kInt64);
  CHECK(val(generalized_dice_loss(onehot(m), m, kNumClasses)) == Approx(0.0).epsilon(1e-12));

  SUBCASE("uniform prediction on a balanced two-class mask") {
    const auto half = torch::where(torch::arange(16).view({1, 4, 4}) < 8, 0, 1).to(torch::kInt64);
    const auto probs = torch::full({1, kNumClasses, 4, 4}, 1.0 / kNumClasses, f64);
    double num = 0, den = 0;
    for (int k = 0; k < 2; ++k) {
      const double g = 8, w = 1.0 / (g * g), inter = 8.0 / kNumClasses, uni = 16.0 / kNumClasses + g;
      num += w * inter;
      den += w * uni;
    }
    CHECK(val(generalized_dice_loss(probs, half, kNumClasses)) == Approx(1.0 - 2.0 * num / den).epsilon(1e-12));
  }
}

TEST_CASE("boundary aware loss") {
  torch::manual_seed(6);
  const auto logits = torch::randn({2, kNumClasses, 8, 8}, f64);
  namespace F = torch::nn::functional;
  SUBCASE("single-class mask is plain cross entropy") {
    const auto m = torch::full({2, 8, 8}, 2, torch::kInt64);
    CHECK(val(boundary_aware_loss(logits, m, 10.0)) == Approx(val(F::cross_entropy(logits, m))).epsilon(1e-12));
  }
  SUBCASE("beta 0 is plain cross entropy") {
    const auto m = torch::randint(0, kNumClasses, {2, 8, 8}, torch::kInt64);
    CHECK(val(boundary_aware_loss(logits, m, 0.0)) == Approx(val(F::cross_entropy(logits, m))).epsilon(1e-12));
  }
  SUBCASE("8x8 two-region weight map matches the neighbourhood scan") {
    Mask m(8, 8, 0);
    for (int y = 0; y < 8; ++y)
      for (int x = 5; x < 8; ++x) m.at(y, x) = 1;
    const auto want = oracle::boundary(m);
    const auto wm = boundary_weight_map(mask_to_tensor(m).view({1, 8, 8}), 10.0).to(f64);
    for (int i = 0; i < 64; ++i) CHECK(wm.view(-1)[i].item<double>() == 1.0 + 10.0 * want[i]);
    // columns 4 and 5 carry the transition, grown by two pixels each side
    CHECK(want[0 * 8 + 1] == 0);
    CHECK(want[0 * 8 + 2] == 1);
    CHECK(want[0 * 8 + 7] == 1);
  }
}

TEST_CASE("distance transform and surface loss") {
  SUBCASE("exact EDT matches brute force") {
    Mask inside(9, 11, 0);
    inside.at(2, 3) = inside.at(7, 9) = inside.at(4, 4) = 1;
    const auto d = distance_transform(inside);
    const auto want = oracle::distance(inside);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(d.data[i] == Approx(want[i]).epsilon(1e-12));
    CHECK(std::isinf(distance_transform(Mask(3, 3, 0)).data[0]));
  }
  SUBCASE("one-hot correct prediction has zero surface loss") {
    torch::manual_seed(7);
    const auto m = torch::randint(0, kNumClasses, {2, 8, 8}, torch::kInt64);
    CHECK(val(surface_loss(onehot(m), m, kNumClasses)) == 0.0);
  }
  SUBCASE("mass on one pixel at distance d reads d / diagonal") {
    auto m = torch::zeros({1, 8, 8}, torch::kInt64);
    m[0][0][0] = 1;
    auto probs = torch::zeros({1, kNumClasses, 8, 8}, f64);
    probs[0][1][3][4] = 1.0;  // class 1 mass, 5 pixels from (0,0)
    const double diag = std::hypot(8.0, 8.0);
    CHECK(val(surface_loss(probs, m, kNumClasses)) * probs.numel() == Approx(5.0 / diag).epsilon(1e-12));
  }
}

TEST_CASE("contrastive loss") {
  CHECK(contrastive_loss(0.0, true, 1.0) == 0.0);
  CHECK(contrastive_loss(1.0, false, 1.0) == 0.0);
  CHECK(contrastive_loss(0.4, false, 1.0) == Approx(0.36));
  CHECK(contrastive_loss(0.4, true, 1.0) == Approx(0.16));
  CHECK_THROWS_AS(contrastive_loss(-0.1, true, 1.0), ConfigError);
  const auto d = torch::tensor({0.0, 1.0, 0.4}, f64), y = torch::tensor({1.0, 0.0, 0.0}, f64);
  CHECK(val(contrastive_loss(d, y, 1.0)) == Approx(0.36 / 3));
  const auto a = torch::tensor({{0.0, 0.0}}, f64), b = torch::tensor({{3.0, 4.0}}, f64);
  CHECK(val(embedding_distance(a, b)) == Approx(5.0));
}

TEST_CASE("domain bce") {
  const auto half = torch::full({2}, 0.5, f64);
  CHECK(val(domain_bce_loss(half, torch::tensor({0.0, 1.0}, f64))) == Approx(std::numbers::ln2));
  CHECK(val(domain_bce_loss(torch::tensor({1.0}, f64), torch::tensor({1.0}, f64))) < 1e-6);
  CHECK(val(domain_bce_loss(torch::tensor({0.9}, f64), torch::tensor({0.0}, f64))) == Approx(2.302585).epsilon(1e-6));
}

TEST_CASE("losses are non-negative and finite on random valid inputs") {
  torch::manual_seed(8);
  for (int t = 0; t < 10; ++t) {
    const auto a = torch::rand({2, 1, 8, 8}, f64), b = torch::rand({2, 1, 8, 8}, f64);
    const auto c = torch::rand({2, 1, 8, 8}, f64), d = torch::rand({2, 1, 8, 8}, f64);
    const auto m1 = torch::randint(0, kNumClasses, {2, 8, 8}, torch::kInt64);
    const auto m2 = torch::randint(0, kNumClasses, {2, 8, 8}, torch::kInt64);
    const auto logits = torch::randn({2, kNumClasses, 8, 8}, f64);
    const std::vector<torch::Tensor> values = {
        adversarial_loss(a.view(-1), b.view(-1)).discriminator,
        adversarial_loss(a.view(-1), b.view(-1)).generator,
        cycle_loss(a, b, c, d),
        identity_loss(a, b, c, d),
        edge_retaining_loss(a, b, c, d, a, b),
        color_mean_loss(a, m1, b, m2, c, d, kNumClasses),
        color_var_loss(a, m1, b, m2, c, d, kNumClasses),
        generalized_dice_loss(logits.softmax(1), m1, kNumClasses),
        boundary_aware_loss(logits, m1),
        surface_loss(logits.softmax(1), m1, kNumClasses),
        segmentation_loss(logits, m1, LossWeights{}),
        domain_bce_loss(a.view(-1), (b.view(-1) > 0.5).to(f64)),
    };
    for (const auto& v : values) {
      CHECK(std::isfinite(val(v)));
      CHECK(val(v) >= 0.0);
    }
  }
}

TEST_CASE("segmentation loss is invariant to batch order") {
  torch::manual_seed(9);
  const auto logits = torch::randn({4, kNumClasses, 8, 8}, f64);
  const auto m = torch::randint(0, kNumClasses, {4, 8, 8}, torch::kInt64);
  const auto perm = torch::tensor({2, 0, 3, 1}, torch::kInt64);
  CHECK(val(segmentation_loss(logits, m, LossWeights{})) ==
        Approx(val(segmentation_loss(logits.index_select(0, perm), m.index_select(0, perm), LossWeights{})))
            .epsilon(1e-6));
}
