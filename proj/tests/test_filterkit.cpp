#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/filterkit.hpp"
#include "test_util.hpp"

using namespace eyeadapt;
using doctest::Approx;

TEST_CASE("pair sampling") {
  const auto s = generate_dataset(6, Style::kSyntheticLike, 1, 32, 32);
  const auto r = generate_dataset(6, Style::kRealLike, 2, 32, 32);

  SUBCASE("four pairs split 1:1:2") {
    Rng rng(3);
    const auto pairs = sample_pairs(s, r, 4, rng);
    REQUIRE(pairs.size() == 4);
    int ss = 0, tt = 0, x = 0;
    for (const auto& p : pairs) {
      ss += p.kind == PairKind::kSameSource;
      tt += p.kind == PairKind::kSameTarget;
      x += p.kind == PairKind::kCross;
    }
    CHECK(ss == 1);
    CHECK(tt == 1);
    CHECK(x == 2);
  }
  SUBCASE("same seed gives the same pairs") {
    Rng a(9), b(9);
    CHECK((sample_pairs(s, r, 40, a) == sample_pairs(s, r, 40, b)));
  }
  SUBCASE("no pair repeats a sample and domain flags match the kind") {
    Rng rng(4);
    for (const auto& p : sample_pairs(s, r, 400, rng)) {
      const auto& a = p.a_source ? s.samples[p.a] : r.samples[p.a];
      const auto& b = p.b_source ? s.samples[p.b] : r.samples[p.b];
      CHECK(a.id != b.id);
      CHECK(p.same_domain() == (p.a_source == p.b_source));
    }
  }
}

TEST_CASE("centroid and distances") {
  CHECK(centroid_of({{0, 0}, {2, 2}, {1, 1}}) == std::vector<double>{1, 1});
  CHECK_THROWS(centroid_of({}));
  CHECK(squared_distance({0, 0}, {3, 4}) == 25.0);
}

TEST_CASE("filter by distance") {
  const auto ds = generate_dataset(5, Style::kSyntheticLike, 5, 32, 32);
  const std::vector<double> d = {0.4, 0.1, 0.9, 0.2, 0.5};

  SUBCASE("infinite threshold keeps everything in order") {
    const auto res = filter_by_distance(ds, d, std::numeric_limits<double>::infinity());
    CHECK((res.kept.samples == ds.samples));
    CHECK(res.total == 5);
  }
  SUBCASE("threshold below the minimum keeps nothing and warns") {
    const auto res = filter_by_distance(ds, d, 0.05);
    CHECK(res.kept.empty());
    CHECK_FALSE(res.warnings.empty());
  }
  SUBCASE("kept samples are exactly those strictly below the threshold") {
    const auto res = filter_by_distance(ds, d, 0.4);
    REQUIRE(res.kept.size() == 2);
    CHECK(res.kept.samples[0].id == ds.samples[1].id);
    CHECK(res.kept.samples[1].id == ds.samples[3].id);
    std::vector<double> kept;
    for (const auto& smp : res.kept.samples) {
      for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.samples[i].id == smp.id) kept.push_back(d[i]);
    }
    CHECK(mean_of(kept) < mean_of(d));
  }
  SUBCASE("length mismatch is rejected") { CHECK_THROWS(filter_by_distance(ds, {0.1}, 1.0)); }
}

TEST_CASE("encoder-based filtering") {
  const auto s = generate_dataset(6, Style::kSyntheticLike, 6, 32, 32);
  const auto r = generate_dataset(6, Style::kRealLike, 7, 32, 32);
  SiameseConfig cfg;
  cfg.encoder.height = cfg.encoder.width = 32;
  cfg.epochs = 1;
  cfg.pairs_per_epoch = 40;
  cfg.seed = 3;
  test::TempDir dir;
  auto res = train_siamese(s, r, cfg, dir.path);
  CHECK(std::isfinite(res.final_loss));

  SUBCASE("a single-image real set has zero mean distance to its own centroid") {
    const auto one = subset(r, {0});
    const auto c = compute_centroid(res.encoder, one);
    CHECK(mean_distance(res.encoder, one, c) == Approx(0.0));
    CHECK(c.dim == 2);
  }
  SUBCASE("filtering at the mean distance lowers the mean distance") {
    const auto c = compute_centroid(res.encoder, r);
    const double before = mean_distance(res.encoder, s, c);
    const auto f = filter_dataset(res.encoder, s, c, before);
    REQUIRE(f.distances.size() == s.size());
    if (!f.kept.empty()) CHECK(mean_distance(res.encoder, f.kept, c) < before);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(f.distances[i] == Approx(distance_to_centroid(res.encoder, s.samples[i], c)));
    }
  }
  SUBCASE("embeddings csv has one row per sample") {
    const auto c = compute_centroid(res.encoder, r);
    const auto f = filter_dataset(res.encoder, s, c, 1e9);
    write_embeddings_csv(f.embeddings, f.distances, dir.path / "e.csv");
    std::ifstream in(dir.path / "e.csv");
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 1 + 6);
  }
}

TEST_CASE("siamese config validation") {
  SiameseConfig cfg;
  cfg.margin = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}
