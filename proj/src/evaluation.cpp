#include "oelift/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "oelift/error.hpp"

namespace oelift {

void EmbeddingTable::insert(const std::string& label, std::vector<double> vec) {
  double norm_sq = 0.0;
  for (double v : vec) norm_sq += v * v;
  if (norm_sq == 0.0 || !std::isfinite(norm_sq)) {
    throw Error("embedding for \"" + label + "\" is zero or non-finite");
  }
  if (dim_ == 0) {
    dim_ = static_cast<int>(vec.size());
  } else if (static_cast<int>(vec.size()) != dim_) {
    throw Error("embedding for \"" + label + "\" has dimension " + std::to_string(vec.size()) +
                ", expected " + std::to_string(dim_));
  }
  double inv = 1.0 / std::sqrt(norm_sq);
  for (double& v : vec) v *= inv;
  table_[label] = std::move(vec);
}

const std::vector<double>& EmbeddingTable::at(const std::string& label) const {
  auto it = table_.find(label);
  if (it == table_.end()) throw Error("no embedding for label \"" + label + "\"");
  return it->second;
}

double iou_3d(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::size_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double s = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(s, -1.0, 1.0);
}

std::vector<std::vector<double>> build_cost_matrix(const EvalBundle& bundle) {
  const auto& preds = bundle.predictions;
  const auto& gt = bundle.ground_truth;
  std::vector<std::vector<double>> cost(preds.size(), std::vector<double>(gt.size(), 0.0));
  for (std::size_t k = 0; k < preds.size(); ++k) {
    double conf = static_cast<double>(preds[k].confidence);
    if (conf < 0.0 || conf > 1.0 || !std::isfinite(conf)) {
      throw Error("prediction " + std::to_string(k) + ": confidence " + std::to_string(conf) +
                  " outside [0, 1]");
    }
    const std::vector<double>& pe = bundle.embeddings.at(preds[k].label);
    for (std::size_t j = 0; j < gt.size(); ++j) {
      double o = iou_3d(preds[k].points, gt[j].points);
      double s = std::max(0.0, cosine_sim(pe, bundle.embeddings.at(gt[j].label)));
      cost[k][j] = -std::cbrt(o * conf * s);
    }
  }
  return cost;
}

AssignmentResult hungarian_match(const std::vector<std::vector<double>>& cost) {
  AssignmentResult result;
  const int rows = static_cast<int>(cost.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(cost[0].size());
  if (rows == 0 || cols == 0) return result;
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != cols) throw Error("cost matrix is ragged");
  }

  // Potentials algorithm on an n x m matrix with n <= m; transpose when
  // the matrix is wide the other way.
  const bool transposed = rows > cols;
  const int n = transposed ? cols : rows;
  const int m = transposed ? rows : cols;
  auto at = [&](int i, int j) { return transposed ? cost[j][i] : cost[i][j]; };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> match(m + 1, 0);  // match[j] = row assigned to column j, 1-based
  std::vector<int> way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= m; ++j) {
    if (match[j] == 0) continue;
    int r = match[j] - 1;
    int c = j - 1;
    if (transposed) std::swap(r, c);
    result.pairs.emplace_back(r, c);
    result.total_cost += cost[r][c];
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  return result;
}

OEResult oe_score(const EvalBundle& bundle) {
  if (bundle.ground_truth.empty()) throw Error("oe_score: no ground-truth instances");
  OEResult result;
  if (bundle.predictions.empty()) return result;
  std::vector<std::vector<double>> cost = build_cost_matrix(bundle);
  AssignmentResult assignment = hungarian_match(cost);
  double total = 0.0;
  for (const auto& [k, j] : assignment.pairs) {
    double o = iou_3d(bundle.predictions[k].points, bundle.ground_truth[j].points);
    double s = cosine_sim(bundle.embeddings.at(bundle.predictions[k].label),
                          bundle.embeddings.at(bundle.ground_truth[j].label));
    double score = -cost[k][j];
    total += score;
    if (o > 0.0) {
      OEMatch match;
      match.prediction = k;
      match.ground_truth = j;
      match.iou = o;
      match.sim = s;
      match.score = score;
      result.matches.push_back(match);
    }
  }
  result.score = 100.0 * total / static_cast<double>(bundle.ground_truth.size());
  return result;
}

std::unordered_map<std::string, std::string> reassign_labels(
    const std::vector<Prediction>& predictions,
    const std::vector<GroundTruthInstance>& ground_truth, const EmbeddingTable& embeddings) {
  std::set<std::string> vocab;
  for (const GroundTruthInstance& g : ground_truth) vocab.insert(g.label);
  std::set<std::string> pred_labels;
  for (const Prediction& p : predictions) pred_labels.insert(p.label);

  std::unordered_map<std::string, std::string> map;
  for (const std::string& label : pred_labels) {
    const std::vector<double>& pe = embeddings.at(label);
    std::string best;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (const std::string& cand : vocab) {  // set order makes ties lexicographic
      double s = cosine_sim(pe, embeddings.at(cand));
      if (s > best_sim) {
        best_sim = s;
        best = cand;
      }
    }
    if (!best.empty()) map[label] = best;
  }
  return map;
}

std::vector<double> default_ap_thresholds() {
  std::vector<double> out;
  for (int i = 50; i <= 95; i += 5) out.push_back(i / 100.0);
  return out;
}

namespace {

// Precision/recall for one category at one IoU threshold, reduced to
// (101-point interpolated AP, final recall).
std::pair<double, double> category_pr(const std::vector<const Prediction*>& preds,
                                      const std::vector<const GroundTruthInstance*>& gt,
                                      double threshold) {
  if (gt.empty()) return {0.0, 0.0};
  std::vector<int> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[a]->confidence > preds[b]->confidence;
  });

  std::vector<char> gt_matched(gt.size(), 0);
  std::vector<char> tp(order.size(), 0);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const Prediction* p = preds[order[rank]];
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (gt_matched[j]) continue;
      double o = iou_3d(p->points, gt[j]->points);
      if (o >= threshold && o > best_iou) {
        best_iou = o;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      gt_matched[best] = 1;
      tp[rank] = 1;
    }
  }

  std::size_t cum_tp = 0;
  std::vector<double> precision(order.size()), recall(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    cum_tp += tp[i];
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(cum_tp) / static_cast<double>(gt.size());
  }

  // Interpolated precision at recall levels 0.00, 0.01, ..., 1.00.
  double ap_sum = 0.0;
  for (int level = 0; level <= 100; ++level) {
    double r = level / 100.0;
    double best = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (recall[i] >= r && precision[i] > best) best = precision[i];
    }
    ap_sum += best;
  }
  double final_recall = order.empty() ? 0.0 : recall.back();
  return {ap_sum / 101.0, final_recall};
}

}  // namespace

APResult ap_evaluate(const std::vector<Prediction>& predictions,
                     const std::vector<GroundTruthInstance>& ground_truth,
                     const std::optional<CategoryGroups>& groups) {
  if (ground_truth.empty()) throw Error("ap_evaluate: no ground-truth instances");
  std::set<std::string> categories;
  for (const GroundTruthInstance& g : ground_truth) categories.insert(g.label);

  std::map<std::string, std::vector<const Prediction*>> preds_by_cat;
  std::map<std::string, std::vector<const GroundTruthInstance*>> gt_by_cat;
  for (const std::string& c : categories) {
    preds_by_cat[c];
    gt_by_cat[c];
  }
  for (const Prediction& p : predictions) {
    auto it = preds_by_cat.find(p.label);
    if (it != preds_by_cat.end()) it->second.push_back(&p);
  }
  for (const GroundTruthInstance& g : ground_truth) gt_by_cat[g.label].push_back(&g);

  const std::vector<double> sweep = default_ap_thresholds();
  APResult result;
  for (const std::string& c : categories) {
    double ap_acc = 0.0, rc_acc = 0.0;
    for (double t : sweep) {
      auto [ap, rc] = category_pr(preds_by_cat[c], gt_by_cat[c], t);
      ap_acc += ap;
      rc_acc += rc;
    }
    // Reported values are percentages.
    result.per_category_ap[c] = 100.0 * ap_acc / static_cast<double>(sweep.size());
    auto [ap50, rc50] = category_pr(preds_by_cat[c], gt_by_cat[c], 0.50);
    auto [ap25, rc25] = category_pr(preds_by_cat[c], gt_by_cat[c], 0.25);
    result.ap += result.per_category_ap[c];
    result.ap50 += 100.0 * ap50;
    result.ap25 += 100.0 * ap25;
    result.ar += 100.0 * rc_acc / static_cast<double>(sweep.size());
    result.rc50 += 100.0 * rc50;
    result.rc25 += 100.0 * rc25;
  }
  double n = static_cast<double>(categories.size());
  result.ap /= n;
  result.ap50 /= n;
  result.ap25 /= n;
  result.ar /= n;
  result.rc50 /= n;
  result.rc25 /= n;

  if (groups) {
    for (const auto& [name, members] : groups->groups) {
      double acc = 0.0;
      int found = 0;
      for (const std::string& c : members) {
        auto it = result.per_category_ap.find(c);
        if (it != result.per_category_ap.end()) {
          acc += it->second;
          ++found;
        }
      }
      result.per_group_ap[name] = found == 0 ? 0.0 : acc / static_cast<double>(found);
    }
  }
  return result;
}

std::vector<Prediction> fixed_confidence_mode(std::vector<Prediction> predictions,
                                              float confidence) {
  for (Prediction& p : predictions) p.confidence = confidence;
  return predictions;
}

EvalReport evaluate(const EvalBundle& bundle, const EvalOptions& options) {
  // Fail up front if the embedding table misses any label.
  std::vector<std::string> missing;
  for (const Prediction& p : bundle.predictions) {
    if (!bundle.embeddings.contains(p.label)) missing.push_back(p.label);
  }
  for (const GroundTruthInstance& g : bundle.ground_truth) {
    if (!bundle.embeddings.contains(g.label)) missing.push_back(g.label);
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    std::string joined;
    for (const std::string& l : missing) {
      if (!joined.empty()) joined += ", ";
      joined += "\"" + l + "\"";
    }
    throw Error("embedding table misses labels: " + joined);
  }

  EvalBundle work = bundle;
  if (options.fixed_confidence) {
    work.predictions = fixed_confidence_mode(std::move(work.predictions), options.confidence_value);
  }

  EvalReport report;
  OEResult oe = oe_score(work);
  report.oe = oe.score;
  report.oe_pairs = std::move(oe.matches);
  report.label_map = reassign_labels(work.predictions, work.ground_truth, work.embeddings);

  std::vector<Prediction> remapped = work.predictions;
  for (Prediction& p : remapped) {
    auto it = report.label_map.find(p.label);
    if (it != report.label_map.end()) p.label = it->second;
  }
  report.ap = ap_evaluate(remapped, work.ground_truth, options.groups);
  return report;
}

}  // namespace oelift
