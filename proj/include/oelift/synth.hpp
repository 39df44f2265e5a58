#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "oelift/dataio.hpp"

namespace oelift {

// A synthetic object: points scattered uniformly in a ball.
struct SynthObject {
  std::string category;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.2;
  int points = 400;
};

struct SynthCamera {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d look_at = Eigen::Vector3d::UnitX();
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
};

struct SceneSpec {
  int width = 640;
  int height = 480;
  double fx = 500.0;
  double fy = 500.0;
  double cx = -1.0;  // negative means width / 2
  double cy = -1.0;  // negative means height / 2
  double tau_depth = 0.1;
  double depth_noise = 0.0;   // stddev in meters, applied after mask rendering
  double mask_dropout = 0.0;  // probability a (frame, mask) pair is dropped
  std::vector<SynthObject> objects;
  std::vector<SynthCamera> cameras;
};

// INI-style spec: [scene], [intrinsics], repeated [object] and [camera]
// sections with "key = value" lines; vectors are space separated.
SceneSpec load_scene_spec(const std::filesystem::path& path);

// Five objects on a ring seen from eight cameras on a wider ring.
SceneSpec default_scene_spec();

// 1 x num_categories one-hot token code for a category index.
TokenMat category_code(int index, int num_categories);
// Index of the largest entry in the code row; ties go to the smaller
// index. Inverse of category_code for clean inputs.
int nearest_code(const TokenMat& tokens, int num_categories);

// A generated scene plus everything needed to evaluate against it. The
// scene's mask tokens are the category one-hot codes, embeddings are
// one-hot per category, and proposals are the true point sets at
// confidence 1.
struct SynthBundle {
  SceneBundle scene;
  std::vector<std::string> categories;  // index -> label
  std::vector<GroundTruthInstance> instances;
  ProposalSet proposals;
  std::vector<std::pair<std::string, std::vector<double>>> embeddings;
};

// Deterministic for a given (spec, seed) on any platform: all sampling
// runs on explicitly coded generators, none on library distributions.
SynthBundle generate_bundle(const SceneSpec& spec, std::uint64_t seed);

// Writes the bundle as a scene directory: cloud.ply, intrinsics.txt,
// frames/, tokens.bin, tokens.manifest.jsonl, scene.manifest, plus
// gt.jsonl, proposals.bin, embeddings.jsonl.
void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir);

}  // namespace oelift
