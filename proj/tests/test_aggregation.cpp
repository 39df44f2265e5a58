#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oelift/aggregation.hpp"
#include "oelift/error.hpp"
#include "test_support.hpp"

using namespace oelift;
namespace ts = testsupport;

namespace {

TokenField random_field(std::mt19937_64& rng, std::uint32_t num_points, int rows, int cols,
                        double density) {
  TokenField field(num_points, rows, cols);
  TokenMat t(rows, cols);
  for (std::uint32_t p = 0; p < num_points; ++p) {
    if (ts::urand(rng) >= density) continue;
    int count = ts::irand(rng, 1, 5);
    for (int c = 0; c < count; ++c) {
      for (float& v : t.data) v = static_cast<float>(ts::urange(rng, -2, 2));
      field.add(p, t);
    }
  }
  return field;
}

Proposal3D random_proposal(std::mt19937_64& rng, std::uint32_t num_points) {
  Proposal3D p;
  for (std::uint32_t i = 0; i < num_points; ++i) {
    if (ts::urand(rng) < 0.4) p.points.push_back(i);
  }
  return p;
}

}  // namespace

TEST_CASE("proposal validation rejects bad index sets") {
  CHECK_NOTHROW(validate_proposal({1.0f, {0, 3, 7}}, 10));
  CHECK_THROWS_AS(validate_proposal({1.0f, {0, 3, 10}}, 10), ConfigError);  // out of range
  CHECK_THROWS_AS(validate_proposal({1.0f, {3, 0}}, 10), ConfigError);      // unsorted
  CHECK_THROWS_AS(validate_proposal({1.0f, {3, 3}}, 10), ConfigError);      // duplicate
  CHECK_THROWS_AS(validate_proposal({1.5f, {0}}, 10), ConfigError);         // confidence
  CHECK_THROWS_AS(validate_proposal({-0.1f, {0}}, 10), ConfigError);
}

TEST_CASE("weighted aggregation equals the raw-sum ratio") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::uint32_t n = static_cast<std::uint32_t>(ts::irand(rng, 1, 80));
    TokenField field = random_field(rng, n, 2, 3, 0.7);
    Proposal3D proposal = random_proposal(rng, n);
    AggregatedTokens got = aggregate_weighted(field, proposal);

    // Independent route: elementwise sum of raw sums over total count.
    std::vector<double> raw(field.token_size(), 0.0);
    double total_count = 0.0;
    for (std::uint32_t p : proposal.points) {
      const TokenField::Entry* e = field.find(p);
      if (!e || e->count == 0) continue;
      total_count += e->count;
      for (std::size_t i = 0; i < raw.size(); ++i) raw[i] += e->sum[i];
    }
    if (total_count == 0.0) {
      CHECK(got.empty);
      continue;
    }
    CHECK_FALSE(got.empty);
    CHECK(got.total_weight == total_count);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      double expect = raw[i] / total_count;
      double diff = std::abs(got.tokens.data[i] - expect);
      CHECK(diff <= 1e-6 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("mean equals weighted when every covered point has the same count") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    std::uint32_t n = 40;
    TokenField field(n, 2, 2);
    TokenMat t(2, 2);
    const int uniform_count = ts::irand(rng, 1, 4);
    for (std::uint32_t p = 0; p < n; ++p) {
      if (ts::urand(rng) < 0.3) continue;
      for (int c = 0; c < uniform_count; ++c) {
        for (float& v : t.data) v = static_cast<float>(ts::urange(rng, -1, 1));
        field.add(p, t);
      }
    }
    Proposal3D proposal = random_proposal(rng, n);
    AggregatedTokens w = aggregate_weighted(field, proposal);
    AggregatedTokens m = aggregate_mean(field, proposal);
    CHECK(w.empty == m.empty);
    if (w.empty) continue;
    for (std::size_t i = 0; i < w.tokens.data.size(); ++i) {
      CHECK(w.tokens.data[i] == doctest::Approx(m.tokens.data[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("all methods agree on single-support proposals") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    std::uint32_t n = 30;
    TokenField field = random_field(rng, n, 2, 3, 0.8);
    // Find one covered point and propose only it.
    std::uint32_t covered = n;
    for (std::uint32_t p = 0; p < n; ++p) {
      if (field.count(p) > 0) {
        covered = p;
        break;
      }
    }
    if (covered == n) continue;
    Proposal3D proposal{1.0f, {covered}};
    AggregatedTokens w = aggregate_weighted(field, proposal);
    AggregatedTokens m = aggregate_mean(field, proposal);
    AggregatedTokens x = aggregate_max(field, proposal);
    AggregatedTokens r = aggregate_random(field, proposal, 12345);
    for (std::size_t i = 0; i < w.tokens.data.size(); ++i) {
      // mean accumulates in float64 while max and random stay in
      // float32, so the double paths may differ from the float paths
      // by an ulp.
      CHECK(w.tokens.data[i] == doctest::Approx(m.tokens.data[i]).epsilon(1e-6));
      CHECK(m.tokens.data[i] == doctest::Approx(x.tokens.data[i]).epsilon(1e-6));
      CHECK(x.tokens.data[i] == r.tokens.data[i]);
    }
    CHECK(w.support == 1);
    CHECK(m.support == 1);
    CHECK(x.support == 1);
    CHECK(r.support == 1);
  }
}

TEST_CASE("max dominates mean elementwise") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    std::uint32_t n = 50;
    TokenField field = random_field(rng, n, 2, 2, 0.7);
    Proposal3D proposal = random_proposal(rng, n);
    AggregatedTokens m = aggregate_mean(field, proposal);
    AggregatedTokens x = aggregate_max(field, proposal);
    if (m.empty) continue;
    for (std::size_t i = 0; i < m.tokens.data.size(); ++i) {
      CHECK(x.tokens.data[i] >= m.tokens.data[i] - 1e-6f);
    }
  }
}

TEST_CASE("random aggregation picks a member's normalized tokens, repeatably") {
  std::mt19937_64 rng(35);
  std::uint32_t n = 40;
  TokenField field = random_field(rng, n, 1, 3, 0.8);
  Proposal3D proposal = random_proposal(rng, n);
  NormalizedField norm = normalize_field(field);

  AggregatedTokens a = aggregate_random(field, proposal, 99);
  AggregatedTokens b = aggregate_random(field, proposal, 99);
  if (a.empty) return;
  CHECK(a.tokens == b.tokens);

  bool matches_member = false;
  for (std::uint32_t p : proposal.points) {
    if (field.count(p) == 0) continue;
    if (norm.at(p) == a.tokens) {
      matches_member = true;
      break;
    }
  }
  CHECK(matches_member);
}

TEST_CASE("uncovered proposals come back empty") {
  TokenField field(10, 2, 2);
  TokenMat t(2, 2);
  t.at(0, 0) = 1.0f;
  field.add(0, t);
  Proposal3D proposal{1.0f, {5, 6, 7}};
  for (AggregatedTokens a : {aggregate_weighted(field, proposal), aggregate_mean(field, proposal),
                             aggregate_max(field, proposal),
                             aggregate_random(field, proposal, 1)}) {
    CHECK(a.empty);
    CHECK(a.support == 0);
    CHECK(a.total_weight == 0.0);
    for (float v : a.tokens.data) CHECK(v == 0.0f);
  }
}

TEST_CASE("method names parse and unknown names are config errors") {
  CHECK(aggregation_method_from_name("weighted") == AggregationMethod::kWeighted);
  CHECK(aggregation_method_from_name("mean") == AggregationMethod::kMean);
  CHECK(aggregation_method_from_name("max") == AggregationMethod::kMax);
  CHECK(aggregation_method_from_name("random") == AggregationMethod::kRandom);
  CHECK(aggregation_method_from_name("maskwise") == AggregationMethod::kMaskwise);
  CHECK_THROWS_AS(aggregation_method_from_name("median"), ConfigError);
  for (AggregationMethod m : {AggregationMethod::kWeighted, AggregationMethod::kMean,
                              AggregationMethod::kMax, AggregationMethod::kRandom,
                              AggregationMethod::kMaskwise}) {
    CHECK(aggregation_method_from_name(to_string(m)) == m);
  }
}

TEST_CASE("maskwise picks the best-overlap mask per view and averages") {
  // Camera at the origin looking down +z; four points projecting to a
  // 2x2 pixel block around the principal point.
  PointCloud cloud;
  cloud.positions = {{-0.05f, -0.05f, 2.0f}, {0.05f, -0.05f, 2.0f},
                     {-0.05f, 0.05f, 2.0f},  {0.05f, 0.05f, 2.0f}};
  cloud.colors.assign(4, {0, 0, 0});

  FrameRecord frame;
  frame.frame_id = 0;
  frame.intrinsics = CameraIntrinsics::from_params(100, 100, 5, 5);
  frame.pose = CameraPose::identity();
  frame.depth = DepthMap(10, 10);
  std::vector<std::size_t> hit_pixels;
  for (const auto& pos : cloud.positions) {
    PixelProjection proj = project_point(pos.cast<double>(), frame.intrinsics, frame.pose);
    REQUIRE(proj.d > 0);
    int col = static_cast<int>(std::floor(proj.u));
    int row = static_cast<int>(std::floor(proj.v));
    REQUIRE(col >= 0);
    REQUIRE(col < 10);
    frame.depth.at(row, col) = proj.d;
    hit_pixels.push_back(static_cast<std::size_t>(row) * 10 + col);
  }

  auto make_mask = [&](int id, const std::vector<std::size_t>& pixels, float token) {
    Mask2D m;
    m.frame_id = 0;
    m.mask_id = id;
    m.width = 10;
    m.height = 10;
    m.pixels.assign(100, 0);
    for (std::size_t px : pixels) {
      if (!m.pixels[px]) {
        m.pixels[px] = 1;
        m.pixel_count += 1;
      }
    }
    m.tokens = TokenMat(1, 1);
    m.tokens.at(0, 0) = token;
    return m;
  };

  // Mask 0 covers exactly the footprint; mask 1 is elsewhere.
  frame.masks.push_back(make_mask(0, hit_pixels, 7.0f));
  frame.masks.push_back(make_mask(1, {0, 1, 2}, 9.0f));

  Proposal3D proposal{1.0f, {0, 1, 2, 3}};
  MaskwiseConfig config;
  AggregatedTokens a = aggregate_maskwise(cloud, proposal, {frame}, config);
  CHECK_FALSE(a.empty);
  CHECK(a.support == 1);
  CHECK(a.tokens.at(0, 0) == 7.0f);

  // Raising the IoU floor above 1 rejects even the perfect match.
  config.iou_min = 1.0;
  AggregatedTokens rejected = aggregate_maskwise(cloud, proposal, {frame}, config);
  CHECK(rejected.empty);

  // Equal IoU ties go to the smaller mask id: shrink both masks to one
  // shared footprint pixel plus one private pixel each.
  config.iou_min = 0.0;
  frame.masks.clear();
  frame.masks.push_back(make_mask(3, {hit_pixels[0], 90}, 3.0f));
  frame.masks.push_back(make_mask(2, {hit_pixels[0], 91}, 5.0f));
  Proposal3D one{1.0f, {0}};
  AggregatedTokens tied = aggregate_maskwise(cloud, one, {frame}, config);
  CHECK(tied.tokens.at(0, 0) == 5.0f);  // mask id 2 beats 3
}

TEST_CASE("maskwise with no matched views is empty") {
  PointCloud cloud;
  cloud.positions = {{0.0f, 0.0f, 2.0f}};
  cloud.colors.assign(1, {0, 0, 0});
  FrameRecord frame;
  frame.intrinsics = CameraIntrinsics::from_params(100, 100, 5, 5);
  frame.pose = CameraPose::identity();
  frame.depth = DepthMap(10, 10);  // all invalid: the point never passes the depth test
  Mask2D m;
  m.mask_id = 0;
  m.width = 10;
  m.height = 10;
  m.pixels.assign(100, 1);
  m.pixel_count = 100;
  m.tokens = TokenMat(1, 1);
  frame.masks.push_back(m);
  Proposal3D proposal{1.0f, {0}};
  AggregatedTokens a = aggregate_maskwise(cloud, proposal, {frame}, MaskwiseConfig{});
  CHECK(a.empty);
  CHECK(a.support == 0);
}
