// Acceptance gate: ten independent checks over the library and the
// command line, one [PASS]/[FAIL] line each. Exits nonzero when any
// check fails. Budgeted checks also fail when they run over time.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "oelift/aggregation.hpp"
#include "oelift/evaluation.hpp"
#include "oelift/lifting.hpp"
#include "oelift/synth.hpp"
#include "test_support.hpp"

namespace ts = testsupport;
using namespace oelift;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::uint32_t> seq(std::uint32_t lo, std::uint32_t hi) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = lo; i < hi; ++i) out.push_back(i);
  return out;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

// 1. Project then unproject 1000 random points in front of random
//    cameras; the round trip must stay within 1e-9 relative in under
//    one second.
bool check_geometry(std::string& detail) {
  Clock::time_point start = Clock::now();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    CameraPose pose = ts::random_pose(rng);
    CameraIntrinsics k = ts::random_intrinsics(rng);
    Eigen::Vector3d cam(ts::urange(rng, -2.0, 2.0), ts::urange(rng, -2.0, 2.0),
                        ts::urange(rng, 0.1, 10.0));
    Eigen::Vector3d world = pose.inverse().apply(cam);
    PixelProjection proj = project_point(world, k, pose);
    if (!(proj.d > 0.0)) {
      detail = "nonpositive projected depth at trial " + std::to_string(i);
      return false;
    }
    Eigen::Vector3d back = unproject_pixel(proj.u, proj.v, proj.d, k, pose);
    double rel = (back - world).norm() / std::max(1.0, world.norm());
    if (!(rel <= 1e-9)) {
      std::ostringstream os;
      os << "relative error " << rel << " at trial " << i;
      detail = os.str();
      return false;
    }
  }
  double took = seconds_since(start);
  if (took >= 1.0) {
    detail = "took " + std::to_string(took) + " s, budget is 1 s";
    return false;
  }
  return true;
}

// 2. Lifting on 200 random micro-scenes matches the plain
//    (frame, mask, point) loop bit for bit in deterministic mode,
//    across thread counts.
bool check_lifting(std::string& detail) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 200; ++t) {
    ts::MicroScene scene = ts::make_micro_scene(rng);
    TokenField expect = ts::naive_lift(scene.cloud, scene.frames, scene.config);
    LiftOptions options;
    options.deterministic = true;
    options.threads = 1 + (t % 4);
    TokenField got = accumulate_tokens(scene.cloud, scene.frames, scene.config, options);
    if (!(got == expect)) {
      detail = "mismatch on scene " + std::to_string(t) + " with " +
               std::to_string(options.threads) + " threads";
      return false;
    }
  }
  return true;
}

// 3. Weighted aggregation over 100 random fields and proposals equals
//    the ratio of raw sums to raw counts within 1e-6 relative.
bool check_weighted_cancellation(std::string& detail) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 100; ++t) {
    const std::uint32_t n = static_cast<std::uint32_t>(ts::irand(rng, 20, 120));
    const int rows = ts::irand(rng, 1, 3);
    const int cols = ts::irand(rng, 1, 4);
    TokenField field(n, rows, cols);
    for (std::uint32_t p = 0; p < n; ++p) {
      if (ts::urand(rng) < 0.3) continue;
      std::uint32_t count = static_cast<std::uint32_t>(ts::irand(rng, 1, 9));
      std::vector<float> sum(static_cast<std::size_t>(rows) * cols);
      for (float& s : sum) s = static_cast<float>(ts::urange(rng, -2.0, 2.0) * count);
      field.set_entry(p, count, std::move(sum));
    }
    Proposal3D prop;
    for (std::uint32_t p = 0; p < n; ++p) {
      if (ts::urand(rng) < 0.5) prop.points.push_back(p);
    }
    AggregatedTokens got = aggregate_weighted(field, prop);

    std::vector<double> sums(static_cast<std::size_t>(rows) * cols, 0.0);
    double total = 0.0;
    for (std::uint32_t p : prop.points) {
      const TokenField::Entry* e = field.find(p);
      if (!e || e->count == 0) continue;
      total += static_cast<double>(e->count);
      for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += e->sum[i];
    }
    if (total == 0.0) {
      if (!got.empty) {
        detail = "uncovered proposal not flagged empty on trial " + std::to_string(t);
        return false;
      }
      continue;
    }
    for (std::size_t i = 0; i < sums.size(); ++i) {
      double ref = sums[i] / total;
      double diff = std::abs(static_cast<double>(got.tokens.data[i]) - ref);
      if (diff > 1e-6 * std::max(1.0, std::abs(ref))) {
        std::ostringstream os;
        os << "trial " << t << " element " << i << ": " << got.tokens.data[i] << " vs " << ref;
        detail = os.str();
        return false;
      }
    }
  }
  return true;
}

// 4. Assignment on 1000 random matrices up to 7x7, rectangular
//    included, reproduces the exhaustive permutation minimum exactly
//    in under five seconds.
bool check_assignment(std::string& detail) {
  Clock::time_point start = Clock::now();
  std::mt19937_64 rng(41);
  for (int t = 0; t < 1000; ++t) {
    const int r = ts::irand(rng, 1, 7);
    const int c = ts::irand(rng, 1, 7);
    std::vector<std::vector<double>> cost(r, std::vector<double>(c));
    for (auto& row : cost) {
      for (double& x : row) x = ts::urange(rng, -1.0, 1.0);
    }
    AssignmentResult res = hungarian_match(cost);
    if (static_cast<int>(res.pairs.size()) != std::min(r, c)) {
      detail = "wrong pair count on trial " + std::to_string(t);
      return false;
    }
    double total = 0.0;
    for (const auto& [i, j] : res.pairs) total += cost[i][j];
    double ref = ts::exhaustive_assignment(cost);
    if (total != ref) {
      std::ostringstream os;
      os << std::setprecision(17) << "trial " << t << " (" << r << "x" << c << "): " << total
         << " vs exhaustive " << ref;
      detail = os.str();
      return false;
    }
  }
  double took = seconds_since(start);
  if (took >= 5.0) {
    detail = "took " + std::to_string(took) + " s, budget is 5 s";
    return false;
  }
  return true;
}

// 5. Matching score worked examples: the fractional 1x1 case, the 2x2
//    case whose optimum is the cross pairing, and a perfect match.
bool check_score_examples(std::string& detail) {
  {
    EvalBundle b;
    b.predictions.push_back({"a", 1.0f, seq(0, 2)});
    b.ground_truth.push_back({"b", seq(0, 4)});
    b.embeddings.insert("a", {1.0, 0.0});
    b.embeddings.insert("b", {0.5, std::sqrt(0.75)});
    double oe = oe_score(b).score;
    if (std::abs(oe - 62.9961) > 1e-4) {
      std::ostringstream os;
      os << std::setprecision(17) << "1x1 case: " << oe;
      detail = os.str();
      return false;
    }
  }
  {
    EvalBundle b;
    const std::vector<std::uint32_t> pts = seq(0, 10);
    b.predictions.push_back({"A", 1.0f, pts});
    b.predictions.push_back({"B", 1.0f, pts});
    b.ground_truth.push_back({"X", pts});
    b.ground_truth.push_back({"Y", pts});
    // Unit vectors whose dot products against the axes are the four
    // pair products 0.512, 0.729, 0.343, 0.008.
    b.embeddings.insert("A", {0.512, 0.729, std::sqrt(1.0 - 0.512 * 0.512 - 0.729 * 0.729)});
    b.embeddings.insert("B", {0.343, 0.008, std::sqrt(1.0 - 0.343 * 0.343 - 0.008 * 0.008)});
    b.embeddings.insert("X", {1.0, 0.0, 0.0});
    b.embeddings.insert("Y", {0.0, 1.0, 0.0});
    OEResult res = oe_score(b);
    if (std::abs(res.score - 80.0) > 1e-6) {
      std::ostringstream os;
      os << std::setprecision(17) << "2x2 case: " << res.score;
      detail = os.str();
      return false;
    }
    if (res.matches.size() != 2 || res.matches[0].ground_truth != 1 ||
        res.matches[1].ground_truth != 0) {
      detail = "2x2 case did not pick the cross pairing";
      return false;
    }
  }
  {
    EvalBundle b;
    b.predictions.push_back({"chair", 1.0f, seq(0, 10)});
    b.predictions.push_back({"table", 1.0f, seq(20, 30)});
    b.ground_truth.push_back({"chair", seq(0, 10)});
    b.ground_truth.push_back({"table", seq(20, 30)});
    b.embeddings.insert("chair", {1.0, 0.0});
    b.embeddings.insert("table", {0.0, 1.0});
    double oe = oe_score(b).score;
    if (oe != 100.0) {
      std::ostringstream os;
      os << std::setprecision(17) << "perfect case: " << oe;
      detail = os.str();
      return false;
    }
  }
  return true;
}

// 6. Raising a single pairwise overlap, with everything else held
//    fixed, never lowers the score. Exercised on the pair-quality
//    matrix the score is defined over.
bool check_score_monotonic(std::string& detail) {
  std::mt19937_64 rng(61);
  auto score_of = [](const std::vector<std::vector<double>>& prod) {
    const std::size_t j_count = prod[0].size();
    std::vector<std::vector<double>> cost(prod.size(), std::vector<double>(j_count));
    for (std::size_t i = 0; i < prod.size(); ++i) {
      for (std::size_t j = 0; j < j_count; ++j) cost[i][j] = -std::cbrt(prod[i][j]);
    }
    AssignmentResult res = hungarian_match(cost);
    double sum = 0.0;
    for (const auto& [i, j] : res.pairs) sum += std::cbrt(prod[i][j]);
    return 100.0 * sum / static_cast<double>(j_count);
  };
  for (int t = 0; t < 200; ++t) {
    const int k = ts::irand(rng, 1, 6);
    const int j = ts::irand(rng, 1, 6);
    std::vector<std::vector<double>> prod(k, std::vector<double>(j));
    for (auto& row : prod) {
      for (double& x : row) x = ts::urand(rng);
    }
    double before = score_of(prod);
    const int rk = ts::irand(rng, 0, k - 1);
    const int rj = ts::irand(rng, 0, j - 1);
    prod[rk][rj] += (1.0 - prod[rk][rj]) * ts::urand(rng);
    double after = score_of(prod);
    if (after < before - 1e-9) {
      std::ostringstream os;
      os << std::setprecision(17) << "trial " << t << ": " << before << " fell to " << after;
      detail = os.str();
      return false;
    }
  }
  return true;
}

// 7. Average precision: three hand-checked cases exactly, then the
//    threshold ordering ap <= ap50 <= ap25 on random instances.
bool check_ap_oracle(std::string& detail) {
  std::vector<GroundTruthInstance> gt;
  gt.push_back({"chair", seq(0, 10)});
  {
    std::vector<Prediction> preds;
    preds.push_back({"chair", 1.0f, seq(0, 10)});
    APResult r = ap_evaluate(preds, gt);
    if (r.ap != 100.0 || r.ap50 != 100.0 || r.ap25 != 100.0 || r.ar != 100.0 ||
        r.rc50 != 100.0 || r.rc25 != 100.0) {
      detail = "perfect case is not all-100";
      return false;
    }
  }
  {
    // True positive first: 0.6-overlap hit at confidence 0.9, then a
    // disjoint miss at 0.8.
    std::vector<Prediction> preds;
    preds.push_back({"chair", 0.9f, seq(0, 6)});
    preds.push_back({"chair", 0.8f, seq(50, 55)});
    APResult r = ap_evaluate(preds, gt);
    if (r.ap50 != 100.0 || r.ap25 != 100.0 || r.ap != 30.0 || r.rc50 != 100.0) {
      std::ostringstream os;
      os << std::setprecision(17) << "hit-first case: ap50 " << r.ap50 << " ap " << r.ap;
      detail = os.str();
      return false;
    }
  }
  {
    // Same two predictions with confidences swapped: the miss ranks
    // first and halves every interpolated precision.
    std::vector<Prediction> preds;
    preds.push_back({"chair", 0.8f, seq(0, 6)});
    preds.push_back({"chair", 0.9f, seq(50, 55)});
    APResult r = ap_evaluate(preds, gt);
    if (r.ap50 != 50.0 || r.ap25 != 50.0 || r.ap != 15.0) {
      std::ostringstream os;
      os << std::setprecision(17) << "miss-first case: ap50 " << r.ap50 << " ap " << r.ap;
      detail = os.str();
      return false;
    }
  }
  std::mt19937_64 rng(71);
  const std::vector<std::string> labels = {"a", "b", "c"};
  for (int t = 0; t < 100; ++t) {
    std::vector<GroundTruthInstance> rgt;
    const int g = ts::irand(rng, 1, 4);
    for (int i = 0; i < g; ++i) {
      std::uint32_t lo = static_cast<std::uint32_t>(20 * i);
      rgt.push_back({labels[static_cast<std::size_t>(ts::irand(rng, 0, 2))],
                     seq(lo, lo + static_cast<std::uint32_t>(ts::irand(rng, 5, 20)))});
    }
    std::vector<Prediction> rpred;
    const int k = ts::irand(rng, 1, 5);
    for (int i = 0; i < k; ++i) {
      std::uint32_t lo = static_cast<std::uint32_t>(ts::irand(rng, 0, 70));
      rpred.push_back({labels[static_cast<std::size_t>(ts::irand(rng, 0, 2))],
                       static_cast<float>(ts::urand(rng)),
                       seq(lo, lo + static_cast<std::uint32_t>(ts::irand(rng, 1, 25)))});
    }
    APResult r = ap_evaluate(rpred, rgt);
    const bool ordered = r.ap >= 0.0 && r.ap <= r.ap50 + 1e-9 && r.ap50 <= r.ap25 + 1e-9 &&
                         r.ap25 <= 100.0 + 1e-9 && r.rc50 <= r.rc25 + 1e-9;
    if (!ordered) {
      std::ostringstream os;
      os << std::setprecision(17) << "trial " << t << ": ap " << r.ap << " ap50 " << r.ap50
         << " ap25 " << r.ap25;
      detail = os.str();
      return false;
    }
  }
  return true;
}

int decode_correct(const SynthBundle& bundle) {
  LiftOptions options;
  options.threads = 0;
  TokenField field =
      accumulate_tokens(bundle.scene.cloud, bundle.scene.frames, bundle.scene.lift, options);
  const int num_categories = static_cast<int>(bundle.categories.size());
  int correct = 0;
  for (std::size_t i = 0; i < bundle.proposals.proposals.size(); ++i) {
    AggregatedTokens agg = aggregate_weighted(field, bundle.proposals.proposals[i]);
    int code = nearest_code(agg.tokens, num_categories);
    if (bundle.categories[static_cast<std::size_t>(code)] == bundle.instances[i].label) {
      ++correct;
    }
  }
  return correct;
}

// 8. The built-in five-object, eight-view scene decodes all five
//    proposals noiselessly; with depth noise 0.01 and mask dropout 0.1
//    at least 4/5 decode on average over 20 seeds, all inside a minute.
bool check_synth_recovery(std::string& detail) {
  Clock::time_point start = Clock::now();
  SceneSpec spec = default_scene_spec();
  SynthBundle clean = generate_bundle(spec, 1);
  const int total_objects = static_cast<int>(clean.instances.size());
  int clean_correct = decode_correct(clean);
  if (clean_correct != total_objects) {
    detail = "noiseless scene decoded " + std::to_string(clean_correct) + "/" +
             std::to_string(total_objects);
    return false;
  }
  spec.depth_noise = 0.01;
  spec.mask_dropout = 0.1;
  int noisy_correct = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    noisy_correct += decode_correct(generate_bundle(spec, seed));
  }
  double average = static_cast<double>(noisy_correct) / 20.0;
  if (average < 4.0) {
    std::ostringstream os;
    os << "noisy scenes averaged " << average << "/5";
    detail = os.str();
    return false;
  }
  double took = seconds_since(start);
  if (took >= 60.0) {
    detail = "took " + std::to_string(took) + " s, budget is 60 s";
    return false;
  }
  return true;
}

// 9. Algebraic relations between the aggregation methods: mean equals
//    weighted when every covered point has the same count, and every
//    method returns the same tokens on single-support proposals.
bool check_aggregation_relations(std::string& detail) {
  std::mt19937_64 rng(91);
  for (int t = 0; t < 20; ++t) {
    const std::uint32_t n = static_cast<std::uint32_t>(ts::irand(rng, 10, 60));
    const std::uint32_t count = static_cast<std::uint32_t>(ts::irand(rng, 1, 8));
    TokenField field(n, 2, 2);
    for (std::uint32_t p = 0; p < n; ++p) {
      if (ts::urand(rng) < 0.25) continue;
      std::vector<float> sum(4);
      for (float& s : sum) s = static_cast<float>(ts::urange(rng, -3.0, 3.0));
      field.set_entry(p, count, std::move(sum));
    }
    Proposal3D prop;
    for (std::uint32_t p = 0; p < n; ++p) {
      if (ts::urand(rng) < 0.6) prop.points.push_back(p);
    }
    AggregatedTokens w = aggregate_weighted(field, prop);
    AggregatedTokens m = aggregate_mean(field, prop);
    if (w.empty != m.empty || w.support != m.support) {
      detail = "uniform-count trial " + std::to_string(t) + ": support disagrees";
      return false;
    }
    for (std::size_t i = 0; i < w.tokens.data.size(); ++i) {
      double diff = std::abs(static_cast<double>(w.tokens.data[i]) - m.tokens.data[i]);
      if (diff > 1e-6 * std::max(1.0, std::abs(static_cast<double>(m.tokens.data[i])))) {
        detail = "uniform-count trial " + std::to_string(t) + ": mean != weighted";
        return false;
      }
    }
  }
  for (int t = 0; t < 20; ++t) {
    const std::uint32_t n = 40;
    TokenField field(n, 1, 3);
    for (std::uint32_t p = 0; p < n; p += 2) {
      std::vector<float> sum(3);
      for (float& s : sum) s = static_cast<float>(ts::urange(rng, -3.0, 3.0));
      field.set_entry(p, static_cast<std::uint32_t>(ts::irand(rng, 1, 9)), std::move(sum));
    }
    const std::uint32_t covered = static_cast<std::uint32_t>(2 * ts::irand(rng, 0, 19));
    Proposal3D prop;
    for (std::uint32_t p = 1; p < covered; p += 2) prop.points.push_back(p);
    prop.points.push_back(covered);
    std::sort(prop.points.begin(), prop.points.end());
    AggregatedTokens w = aggregate_weighted(field, prop);
    AggregatedTokens m = aggregate_mean(field, prop);
    AggregatedTokens x = aggregate_max(field, prop);
    AggregatedTokens r = aggregate_random(field, prop, 1234 + static_cast<std::uint64_t>(t));
    if (w.support != 1 || m.support != 1 || x.support != 1 || r.support != 1) {
      detail = "single-support trial " + std::to_string(t) + ": support is not 1";
      return false;
    }
    if (!(x.tokens == r.tokens)) {
      detail = "single-support trial " + std::to_string(t) + ": max != random";
      return false;
    }
    for (std::size_t i = 0; i < w.tokens.data.size(); ++i) {
      double ref = m.tokens.data[i];
      double dw = std::abs(static_cast<double>(w.tokens.data[i]) - ref);
      double dx = std::abs(static_cast<double>(x.tokens.data[i]) - ref);
      if (dw > 1e-6 * std::max(1.0, std::abs(ref)) || dx > 1e-6 * std::max(1.0, std::abs(ref))) {
        detail = "single-support trial " + std::to_string(t) + ": methods disagree";
        return false;
      }
    }
  }
  return true;
}

// 10. The command line replays byte for byte: synth a scene, lift it
//     twice at different thread counts, aggregate twice with the random
//     method, and compare outputs.
bool check_cli_determinism(std::string& detail) {
  ts::TempDir tmp("oelift_acceptance");
  const std::string bin = OELIFT_BIN;
  const std::filesystem::path log = tmp / "cli.log";
  auto run = [&](const std::string& args) {
    std::string cmd = bin + " " + args + " >/dev/null 2>>" + log.string();
    int status = std::system(cmd.c_str());
    return status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  };
  const std::string scene = (tmp / "scene").string();
  if (!run("synth --out " + scene + " --seed 3")) {
    detail = "synth run failed";
    return false;
  }
  const std::string manifest = scene + "/scene.manifest";
  const std::string lift1 = (tmp / "lift1.bin").string();
  const std::string lift2 = (tmp / "lift2.bin").string();
  if (!run("lift --scene " + manifest + " --out " + lift1 +
           " --deterministic --seed 7 --threads 1") ||
      !run("lift --scene " + manifest + " --out " + lift2 +
           " --deterministic --seed 7 --threads 4")) {
    detail = "lift run failed";
    return false;
  }
  if (read_bytes(lift1) != read_bytes(lift2) || read_bytes(lift1).empty()) {
    detail = "lift outputs differ between runs";
    return false;
  }
  const std::string agg1 = (tmp / "agg1.bin").string();
  const std::string agg2 = (tmp / "agg2.bin").string();
  const std::string agg_args = " --proposals " + scene + "/proposals.bin" +
                               " --method random --deterministic --seed 7";
  if (!run("aggregate --field " + lift1 + " --out " + agg1 + agg_args) ||
      !run("aggregate --field " + lift1 + " --out " + agg2 + agg_args)) {
    detail = "aggregate run failed";
    return false;
  }
  if (read_bytes(agg1) != read_bytes(agg2) || read_bytes(agg1).empty()) {
    detail = "aggregate outputs differ between runs";
    return false;
  }
  if (read_bytes(tmp / "agg1.jsonl") != read_bytes(tmp / "agg2.jsonl")) {
    detail = "aggregate sidecars differ between runs";
    return false;
  }
  return true;
}

}  // namespace

int main() {
  struct Check {
    const char* name;
    bool (*fn)(std::string&);
  };
  const Check checks[] = {
      {"pinhole round trip stays within 1e-9", check_geometry},
      {"lift matches the naive triple loop bitwise", check_lifting},
      {"weighted aggregation equals the raw-sum ratio", check_weighted_cancellation},
      {"assignment matches the exhaustive minimum", check_assignment},
      {"matching score worked examples", check_score_examples},
      {"raising one overlap never lowers the score", check_score_monotonic},
      {"average precision oracle and threshold ordering", check_ap_oracle},
      {"synthetic scenes decode back to their categories", check_synth_recovery},
      {"aggregation methods obey their algebraic relations", check_aggregation_relations},
      {"command line replays are byte identical", check_cli_determinism},
  };
  bool all_passed = true;
  int index = 0;
  for (const Check& check : checks) {
    ++index;
    std::string detail;
    Clock::time_point start = Clock::now();
    bool ok = false;
    try {
      ok = check.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    std::ostringstream line;
    line << (ok ? "[PASS] " : "[FAIL] ") << std::setw(2) << index << " " << check.name;
    if (!ok && !detail.empty()) line << ": " << detail;
    line << " (" << std::fixed << std::setprecision(2) << seconds_since(start) << " s)";
    std::cout << line.str() << "\n";
    if (!ok) all_passed = false;
  }
  return all_passed ? 0 : 1;
}
