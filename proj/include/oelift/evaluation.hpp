#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace oelift {

// A predicted 3D instance: free-form label, confidence, member points
// (ascending, unique).
struct Prediction {
  std::string label;
  float confidence = 1.0f;
  std::vector<std::uint32_t> points;
};

// A ground-truth instance with its closed-vocabulary label.
struct GroundTruthInstance {
  std::string label;
  std::vector<std::uint32_t> points;
};

// Label -> unit embedding. Vectors renormalize on insert; zero vectors
// are rejected.
class EmbeddingTable {
 public:
  void insert(const std::string& label, std::vector<double> vec);
  // Throws Error naming the label when it is absent.
  const std::vector<double>& at(const std::string& label) const;
  bool contains(const std::string& label) const { return table_.count(label) != 0; }
  std::size_t size() const { return table_.size(); }
  int dim() const { return dim_; }

 private:
  std::unordered_map<std::string, std::vector<double>> table_;
  int dim_ = 0;
};

// Everything evaluation needs for one scene.
struct EvalBundle {
  std::vector<Prediction> predictions;
  std::vector<GroundTruthInstance> ground_truth;
  EmbeddingTable embeddings;
};

// Intersection over union of two ascending unique index sets.
double iou_3d(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

// Cosine similarity of two equal-length vectors, 0 when either is zero.
double cosine_sim(const std::vector<double>& a, const std::vector<double>& b);

// Pairwise assignment costs: C[k][j] = -(iou * conf_k * max(0, sim))^(1/3)
// for prediction k against ground truth j, where conf_k is prediction
// k's confidence.
std::vector<std::vector<double>> build_cost_matrix(const EvalBundle& bundle);

// Min-cost one-to-one assignment. Rectangular inputs are padded
// implicitly with zero-cost slots, so exactly min(rows, cols) real
// pairs come back.
struct AssignmentResult {
  std::vector<std::pair<int, int>> pairs;  // (row, col), ascending by row
  double total_cost = 0.0;
};
AssignmentResult hungarian_match(const std::vector<std::vector<double>>& cost);

// One matched (prediction, ground truth) pair with its score parts.
struct OEMatch {
  int prediction = 0;
  int ground_truth = 0;
  double iou = 0.0;
  double sim = 0.0;
  double score = 0.0;  // (iou * rho * max(0, sim))^(1/3)
};

struct OEResult {
  double score = 0.0;  // 0..100, averaged over ground-truth instances
  std::vector<OEMatch> matches;  // pairs with iou > 0 only
};

// Open-ended recognition quality: optimal one-to-one matching under the
// cost matrix, per-pair geometric-mean scores, averaged over ground
// truth and scaled to percent.
OEResult oe_score(const EvalBundle& bundle);

// Maps each predicted label to the ground-truth label whose embedding
// is most cosine-similar. Ties break lexicographically. The table must
// cover every label on both sides.
std::unordered_map<std::string, std::string> reassign_labels(
    const std::vector<Prediction>& predictions,
    const std::vector<GroundTruthInstance>& ground_truth, const EmbeddingTable& embeddings);

// Optional category split definitions (e.g. head/common/tail).
struct CategoryGroups {
  std::map<std::string, std::vector<std::string>> groups;
};

struct APResult {
  double ap = 0.0;    // mean over thresholds 0.50:0.05:0.95
  double ap50 = 0.0;
  double ap25 = 0.0;
  double ar = 0.0;    // mean recall over the same thresholds
  double rc50 = 0.0;
  double rc25 = 0.0;
  std::map<std::string, double> per_category_ap;       // at the threshold sweep
  std::map<std::string, double> per_group_ap;          // empty without groups
};

std::vector<double> default_ap_thresholds();

// Class-aware average precision over point-set IoU. Per category and
// threshold, predictions are taken in descending confidence and match
// the unmatched ground truth of that category with the highest IoU at
// or above the threshold; precision is interpolated at 101 recall
// levels.
APResult ap_evaluate(const std::vector<Prediction>& predictions,
                     const std::vector<GroundTruthInstance>& ground_truth,
                     const std::optional<CategoryGroups>& groups = std::nullopt);

// Replaces every confidence with the given constant.
std::vector<Prediction> fixed_confidence_mode(std::vector<Prediction> predictions,
                                              float confidence = 1.0f);

struct EvalOptions {
  bool fixed_confidence = false;
  float confidence_value = 1.0f;
  std::optional<CategoryGroups> groups;
};

// Full report: OE on the original open-ended labels, then AP on the
// reassigned closed-vocabulary labels.
struct EvalReport {
  double oe = 0.0;
  APResult ap;
  std::vector<OEMatch> oe_pairs;
  std::unordered_map<std::string, std::string> label_map;
};

EvalReport evaluate(const EvalBundle& bundle, const EvalOptions& options = {});

}  // namespace oelift
