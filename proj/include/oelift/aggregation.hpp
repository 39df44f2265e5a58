#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oelift/lifting.hpp"
#include "oelift/types.hpp"

namespace oelift {

// One 3D instance proposal: a confidence and the indices of its member
// points, ascending and unique.
struct Proposal3D {
  float confidence = 1.0f;
  std::vector<std::uint32_t> points;
};

// Throws ConfigError when indices are out of range, unsorted, or
// duplicated.
void validate_proposal(const Proposal3D& proposal, std::uint32_t num_points);

// Result of reducing a proposal's pointwise tokens to one matrix.
// total_weight is the sum of the per-point weights the method used
// (contribution counts for the weighted method, matched views for the
// maskwise path, member counts otherwise). empty marks a proposal none
// of whose points carried any tokens; its matrix is zero.
struct AggregatedTokens {
  TokenMat tokens;
  std::size_t support = 0;  // points (or views) that contributed
  double total_weight = 0.0;
  bool empty = false;
};

// Contribution-count weighted mean of the normalized tokens. Equal to
// the elementwise sum of raw token sums divided by the total count.
AggregatedTokens aggregate_weighted(const TokenField& field, const Proposal3D& proposal);

// Unweighted mean of the normalized tokens over points with coverage.
AggregatedTokens aggregate_mean(const TokenField& field, const Proposal3D& proposal);

// Elementwise maximum of the normalized tokens over points with
// coverage.
AggregatedTokens aggregate_max(const TokenField& field, const Proposal3D& proposal);

// Normalized tokens of one uniformly chosen covered member point.
// Deterministic given the seed.
AggregatedTokens aggregate_random(const TokenField& field, const Proposal3D& proposal,
                                  std::uint64_t seed);

struct MaskwiseConfig {
  LiftConfig lift;
  double iou_min = 0.25;  // minimum pixel IoU to accept a view's best mask
};

// Baseline that skips the pointwise field: per view, the proposal's
// depth-tested footprint is matched against that view's 2D masks by
// pixel IoU, and the best mask's tokens (when IoU > iou_min) enter an
// unweighted mean over views. Ties on IoU go to the smaller mask id.
AggregatedTokens aggregate_maskwise(const PointCloud& cloud, const Proposal3D& proposal,
                                    const std::vector<FrameRecord>& frames,
                                    const MaskwiseConfig& config);

enum class AggregationMethod { kWeighted, kMean, kMax, kRandom, kMaskwise };

// Accepts "weighted", "mean", "max", "random", "maskwise".
AggregationMethod aggregation_method_from_name(const std::string& name);
std::string to_string(AggregationMethod method);

}  // namespace oelift
