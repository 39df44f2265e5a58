#include "oelift/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "oelift/error.hpp"

namespace oelift {

void validate_proposal(const Proposal3D& proposal, std::uint32_t num_points) {
  if (!(proposal.confidence >= 0.0f && proposal.confidence <= 1.0f)) {
    throw ConfigError("proposal: confidence must lie in [0, 1]");
  }
  for (std::size_t i = 0; i < proposal.points.size(); ++i) {
    std::uint32_t p = proposal.points[i];
    if (p >= num_points) {
      throw ConfigError("proposal: point index " + std::to_string(p) +
                        " out of range for cloud of " + std::to_string(num_points));
    }
    if (i > 0 && p <= proposal.points[i - 1]) {
      throw ConfigError("proposal: point indices must be strictly ascending");
    }
  }
}

AggregatedTokens aggregate_weighted(const TokenField& field, const Proposal3D& proposal) {
  validate_proposal(proposal, field.num_points());
  AggregatedTokens out;
  out.tokens = TokenMat(field.token_rows(), field.token_cols());
  std::vector<double> acc(field.token_size(), 0.0);
  double total = 0.0;
  for (std::uint32_t p : proposal.points) {
    const TokenField::Entry* e = field.find(p);
    if (!e || e->count == 0) continue;
    out.support += 1;
    double w = static_cast<double>(e->count);
    total += w;
    double inv = 1.0 / w;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i] += (e->sum[i] * inv) * w;
    }
  }
  out.total_weight = total;
  if (total == 0.0) {
    out.empty = true;
    return out;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.tokens.data[i] = static_cast<float>(acc[i] / total);
  }
  return out;
}

AggregatedTokens aggregate_mean(const TokenField& field, const Proposal3D& proposal) {
  validate_proposal(proposal, field.num_points());
  AggregatedTokens out;
  out.tokens = TokenMat(field.token_rows(), field.token_cols());
  std::vector<double> acc(field.token_size(), 0.0);
  for (std::uint32_t p : proposal.points) {
    const TokenField::Entry* e = field.find(p);
    if (!e || e->count == 0) continue;
    out.support += 1;
    double inv = 1.0 / static_cast<double>(e->count);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += e->sum[i] * inv;
  }
  out.total_weight = static_cast<double>(out.support);
  if (out.support == 0) {
    out.empty = true;
    return out;
  }
  double inv = 1.0 / static_cast<double>(out.support);
  for (std::size_t i = 0; i < acc.size(); ++i) out.tokens.data[i] = static_cast<float>(acc[i] * inv);
  return out;
}

AggregatedTokens aggregate_max(const TokenField& field, const Proposal3D& proposal) {
  validate_proposal(proposal, field.num_points());
  AggregatedTokens out;
  out.tokens = TokenMat(field.token_rows(), field.token_cols());
  bool any = false;
  for (std::uint32_t p : proposal.points) {
    const TokenField::Entry* e = field.find(p);
    if (!e || e->count == 0) continue;
    out.support += 1;
    float inv = 1.0f / static_cast<float>(e->count);
    if (!any) {
      for (std::size_t i = 0; i < out.tokens.data.size(); ++i) out.tokens.data[i] = e->sum[i] * inv;
      any = true;
    } else {
      for (std::size_t i = 0; i < out.tokens.data.size(); ++i) {
        out.tokens.data[i] = std::max(out.tokens.data[i], e->sum[i] * inv);
      }
    }
  }
  out.total_weight = static_cast<double>(out.support);
  out.empty = !any;
  return out;
}

AggregatedTokens aggregate_random(const TokenField& field, const Proposal3D& proposal,
                                  std::uint64_t seed) {
  validate_proposal(proposal, field.num_points());
  AggregatedTokens out;
  out.tokens = TokenMat(field.token_rows(), field.token_cols());
  std::vector<std::uint32_t> covered;
  for (std::uint32_t p : proposal.points) {
    if (field.count(p) > 0) covered.push_back(p);
  }
  out.support = covered.size();
  out.total_weight = static_cast<double>(covered.size());
  if (covered.empty()) {
    out.empty = true;
    return out;
  }
  // Rejection sampling keeps the draw identical across standard library
  // implementations; uniform_int_distribution does not pin one down.
  std::mt19937_64 rng(seed);
  std::uint64_t n = covered.size();
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        (std::numeric_limits<std::uint64_t>::max() % n);
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  std::uint32_t pick = covered[static_cast<std::size_t>(draw % n)];
  const TokenField::Entry* e = field.find(pick);
  float inv = 1.0f / static_cast<float>(e->count);
  for (std::size_t i = 0; i < out.tokens.data.size(); ++i) out.tokens.data[i] = e->sum[i] * inv;
  return out;
}

AggregatedTokens aggregate_maskwise(const PointCloud& cloud, const Proposal3D& proposal,
                                    const std::vector<FrameRecord>& frames,
                                    const MaskwiseConfig& config) {
  validate_proposal(proposal, static_cast<std::uint32_t>(cloud.size()));
  int rows = 0, cols = 0;
  for (const FrameRecord& f : frames) {
    if (!f.masks.empty()) {
      rows = f.masks.front().tokens.rows;
      cols = f.masks.front().tokens.cols;
      break;
    }
  }
  AggregatedTokens out;
  out.tokens = TokenMat(rows, cols);
  std::vector<double> acc(out.tokens.data.size(), 0.0);
  std::size_t matched_views = 0;
  for (const FrameRecord& frame : frames) {
    if (frame.masks.empty()) continue;
    std::vector<std::int64_t> pixel = project_visible_pixels(cloud, frame, config.lift);
    std::vector<std::int64_t> footprint;
    for (std::uint32_t p : proposal.points) {
      if (pixel[p] >= 0) footprint.push_back(pixel[p]);
    }
    if (footprint.empty()) continue;
    std::sort(footprint.begin(), footprint.end());
    footprint.erase(std::unique(footprint.begin(), footprint.end()), footprint.end());

    const Mask2D* best = nullptr;
    double best_iou = 0.0;
    for (const Mask2D& mask : frame.masks) {
      std::size_t inter = 0;
      for (std::int64_t px : footprint) {
        if (mask.contains(static_cast<std::size_t>(px))) ++inter;
      }
      std::size_t uni = footprint.size() + mask.pixel_count - inter;
      double iou = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      if (!best || iou > best_iou || (iou == best_iou && mask.mask_id < best->mask_id)) {
        best = &mask;
        best_iou = iou;
      }
    }
    if (!best || best_iou <= config.iou_min) continue;
    matched_views += 1;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += best->tokens.data[i];
  }
  out.support = matched_views;
  out.total_weight = static_cast<double>(matched_views);
  if (matched_views == 0) {
    out.empty = true;
    return out;
  }
  double inv = 1.0 / static_cast<double>(matched_views);
  for (std::size_t i = 0; i < acc.size(); ++i) out.tokens.data[i] = static_cast<float>(acc[i] * inv);
  return out;
}

AggregationMethod aggregation_method_from_name(const std::string& name) {
  if (name == "weighted") return AggregationMethod::kWeighted;
  if (name == "mean") return AggregationMethod::kMean;
  if (name == "max") return AggregationMethod::kMax;
  if (name == "random") return AggregationMethod::kRandom;
  if (name == "maskwise") return AggregationMethod::kMaskwise;
  throw ConfigError("unknown aggregation method \"" + name +
                    "\" (expected weighted, mean, max, random, or maskwise)");
}

std::string to_string(AggregationMethod method) {
  switch (method) {
    case AggregationMethod::kWeighted: return "weighted";
    case AggregationMethod::kMean: return "mean";
    case AggregationMethod::kMax: return "max";
    case AggregationMethod::kRandom: return "random";
    case AggregationMethod::kMaskwise: return "maskwise";
  }
  return "unknown";
}

}  // namespace oelift
