#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oelift/aggregation.hpp"
#include "oelift/evaluation.hpp"
#include "oelift/geometry.hpp"
#include "oelift/lifting.hpp"
#include "oelift/types.hpp"

namespace oelift {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

// Vertex clouds with float positions and 8-bit RGB. The loader accepts
// ascii and binary_little_endian files and skips extra scalar vertex
// properties; anything else is reported as unsupported.
PointCloud load_ply(const std::filesystem::path& path);
void save_ply(const PointCloud& cloud, const std::filesystem::path& path,
              PlyFormat format = PlyFormat::kBinaryLittleEndian);

// 16-bit grayscale PNG, one millimeter per unit, 0 = missing sample.
DepthMap load_depth_png(const std::filesystem::path& path);
void save_depth_png(const DepthMap& depth, const std::filesystem::path& path);

// 3x3 row-major whitespace-separated text.
CameraIntrinsics load_intrinsics(const std::filesystem::path& path);
void save_intrinsics(const CameraIntrinsics& intrinsics, const std::filesystem::path& path);

// 4x4 row-major camera-to-world matrix on disk; the loader hands back
// the world-to-camera pose ready for projection.
CameraPose load_pose(const std::filesystem::path& path);
void save_pose(const CameraPose& pose, const std::filesystem::path& path);

// Run-length masks over one image: header "height width num_masks",
// then per mask "mask_id num_runs" followed by num_runs "start length"
// pairs over row-major pixel indices. Runs are ascending and disjoint.
// Tokens are attached separately; masks load with empty token matrices.
std::vector<Mask2D> load_masks(const std::filesystem::path& path);
void save_masks(const std::vector<Mask2D>& masks, int width, int height,
                const std::filesystem::path& path);

// Token blob ("OETK": version, rows, cols, then contiguous rows*cols
// float32 blocks) plus a JSONL manifest mapping {frame, mask_id} to the
// block's byte offset. Blocks are fetched lazily.
class TokenBlobReader {
 public:
  TokenBlobReader(const std::filesystem::path& blob_path,
                  const std::filesystem::path& manifest_path);

  int token_rows() const { return rows_; }
  int token_cols() const { return cols_; }
  bool contains(int frame_id, int mask_id) const;
  TokenMat fetch(int frame_id, int mask_id);

 private:
  std::ifstream blob_;
  std::string blob_name_;
  int rows_ = 0;
  int cols_ = 0;
  std::uint64_t blob_size_ = 0;
  std::map<std::pair<int, int>, std::uint64_t> offsets_;
};

struct TokenBlobEntry {
  int frame_id = 0;
  int mask_id = 0;
  TokenMat tokens;
};

void save_token_blob(const std::vector<TokenBlobEntry>& entries,
                     const std::filesystem::path& blob_path,
                     const std::filesystem::path& manifest_path);

// Proposal file ("OEPR": version, num_points, num_proposals, then per
// proposal a float32 confidence, u32 count, count ascending u32
// indices).
struct ProposalSet {
  std::uint32_t num_points = 0;
  std::vector<Proposal3D> proposals;
};

ProposalSet load_proposals(const std::filesystem::path& path);
void save_proposals(const ProposalSet& set, const std::filesystem::path& path);

// JSONL records, one object per line:
//   predictions  {"label", "confidence", "points"}
//   ground truth {"label", "points"}
//   embeddings   {"label", "vector"}
std::vector<Prediction> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::vector<Prediction>& predictions,
                      const std::filesystem::path& path);
std::vector<GroundTruthInstance> load_ground_truth(const std::filesystem::path& path);
void save_ground_truth(const std::vector<GroundTruthInstance>& instances,
                       const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::vector<std::pair<std::string, std::vector<double>>>& rows,
                     const std::filesystem::path& path);

// JSON object mapping group names to label arrays.
CategoryGroups load_category_groups(const std::filesystem::path& path);

// A scene ready for lifting: cloud, shared camera model, per-frame
// depth/pose/masks with tokens attached. Non-fatal loading hiccups
// (frames skipped for missing files) are collected as warnings.
struct SceneBundle {
  PointCloud cloud;
  CameraIntrinsics intrinsics;
  LiftConfig lift;
  std::vector<FrameRecord> frames;
  std::vector<std::string> warnings;
};

// Scene manifest: "key value" lines, # comments. Required keys cloud,
// intrinsics, frames, tokens, token_manifest; optional tau_depth and
// stride. Relative paths resolve against the manifest's directory.
// Frames are discovered as <id>.depth.png inside the frames directory;
// a frame missing its pose is skipped with a warning, missing masks
// mean an empty mask list.
SceneBundle load_scene(const std::filesystem::path& manifest_path);

enum class ReportFormat { kJson, kTsv };
ReportFormat report_format_from_name(const std::string& name);

std::string render_report(const EvalReport& report, ReportFormat format);
void write_report(const EvalReport& report, const std::filesystem::path& path,
                  ReportFormat format);

// Aggregated proposal tokens: an "OETK" blob keyed by proposal index
// (offset = header size + index * block size) plus a JSONL sidecar
// {"proposal", "support", "total_weight", "empty"}.
void save_aggregated(const std::vector<AggregatedTokens>& rows,
                     const std::filesystem::path& blob_path,
                     const std::filesystem::path& sidecar_path);
std::vector<AggregatedTokens> load_aggregated(const std::filesystem::path& blob_path,
                                              const std::filesystem::path& sidecar_path);

}  // namespace oelift
