#include "oelift/synth.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "oelift/error.hpp"

namespace oelift {

namespace {

// splitmix64 step, used to derive independent stream seeds from one
// user seed. The constants are the reference ones.
std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed ^ (0xd1b54a32d192ed03ull * (stream + 1));
  return splitmix64(state);
}

// Uniform [0, 1) with 53 random bits: identical on every platform,
// unlike the library distributions.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Basic Box-Muller, one variate per call.
class Gaussian {
 public:
  double sample(std::mt19937_64& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform01(rng);
    } while (u1 <= 0.0);
    double u2 = uniform01(rng);
    double mag = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = mag * std::sin(angle);
    has_spare_ = true;
    return mag * std::cos(angle);
  }

 private:
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Eigen::Vector3d sample_in_ball(std::mt19937_64& rng, const Eigen::Vector3d& center, double radius) {
  for (;;) {
    double x = 2.0 * uniform01(rng) - 1.0;
    double y = 2.0 * uniform01(rng) - 1.0;
    double z = 2.0 * uniform01(rng) - 1.0;
    if (x * x + y * y + z * z <= 1.0) {
      return center + radius * Eigen::Vector3d(x, y, z);
    }
  }
}

CameraPose pose_from_lookat(const SynthCamera& cam) {
  Eigen::Vector3d forward = cam.look_at - cam.position;
  if (forward.norm() < 1e-12) throw ConfigError("camera looks at its own position");
  forward.normalize();
  Eigen::Vector3d right = forward.cross(cam.up);
  if (right.norm() < 1e-9) throw ConfigError("camera up vector is parallel to the view direction");
  right.normalize();
  Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r_c2w;
  r_c2w.col(0) = right;
  r_c2w.col(1) = down;
  r_c2w.col(2) = forward;
  return CameraPose(r_c2w, cam.position, CameraPose::Direction::kCameraToWorld).world_to_camera();
}

std::array<std::uint8_t, 3> category_color(int index) {
  // Golden-angle hue walk, full saturation; good separation for small
  // palettes without a lookup table.
  double h = std::fmod(0.1 + index * 0.61803398875, 1.0) * 6.0;
  double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
  }
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {q(r), q(g), q(b)};
}

}  // namespace

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  SceneSpec spec;
  std::string section;
  std::string line;
  std::size_t line_no = 0;

  auto fail = [&](const std::string& why) -> void {
    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  auto parse_vec3 = [&](const std::string& value) {
    std::istringstream words(value);
    Eigen::Vector3d v;
    if (!(words >> v.x() >> v.y() >> v.z())) fail("expected three numbers, got \"" + value + "\"");
    std::string extra;
    if (words >> extra) fail("expected three numbers, got \"" + value + "\"");
    return v;
  };
  auto parse_double = [&](const std::string& value) {
    try {
      std::size_t used = 0;
      double v = std::stod(value, &used);
      if (used != value.size()) fail("bad number \"" + value + "\"");
      return v;
    } catch (const std::exception&) {
      fail("bad number \"" + value + "\"");
      return 0.0;
    }
  };
  auto parse_int = [&](const std::string& value) {
    try {
      std::size_t used = 0;
      int v = std::stoi(value, &used);
      if (used != value.size()) fail("bad integer \"" + value + "\"");
      return v;
    } catch (const std::exception&) {
      fail("bad integer \"" + value + "\"");
      return 0;
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    std::size_t last = line.find_last_not_of(" \t");
    std::string trimmed = line.substr(first, last - first + 1);
    if (trimmed[0] == '#' || trimmed[0] == ';') continue;

    if (trimmed.front() == '[') {
      if (trimmed.back() != ']') fail("unterminated section header");
      section = trimmed.substr(1, trimmed.size() - 2);
      if (section == "object") {
        spec.objects.emplace_back();
      } else if (section == "camera") {
        spec.cameras.emplace_back();
      } else if (section != "scene" && section != "intrinsics") {
        fail("unknown section \"" + section + "\"");
      }
      continue;
    }

    std::size_t eq = trimmed.find('=');
    if (eq == std::string::npos) fail("expected \"key = value\"");
    auto strip = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      std::size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    std::string key = strip(trimmed.substr(0, eq));
    std::string value = strip(trimmed.substr(eq + 1));
    if (key.empty() || value.empty()) fail("expected \"key = value\"");

    if (section == "scene") {
      if (key == "tau_depth") {
        spec.tau_depth = parse_double(value);
      } else if (key == "depth_noise") {
        spec.depth_noise = parse_double(value);
      } else if (key == "mask_dropout") {
        spec.mask_dropout = parse_double(value);
      } else {
        fail("unknown key \"" + key + "\" in [scene]");
      }
    } else if (section == "intrinsics") {
      if (key == "width") {
        spec.width = parse_int(value);
      } else if (key == "height") {
        spec.height = parse_int(value);
      } else if (key == "fx") {
        spec.fx = parse_double(value);
      } else if (key == "fy") {
        spec.fy = parse_double(value);
      } else if (key == "cx") {
        spec.cx = parse_double(value);
      } else if (key == "cy") {
        spec.cy = parse_double(value);
      } else {
        fail("unknown key \"" + key + "\" in [intrinsics]");
      }
    } else if (section == "object") {
      SynthObject& obj = spec.objects.back();
      if (key == "category") {
        obj.category = value;
      } else if (key == "center") {
        obj.center = parse_vec3(value);
      } else if (key == "radius") {
        obj.radius = parse_double(value);
      } else if (key == "points") {
        obj.points = parse_int(value);
      } else {
        fail("unknown key \"" + key + "\" in [object]");
      }
    } else if (section == "camera") {
      SynthCamera& cam = spec.cameras.back();
      if (key == "position") {
        cam.position = parse_vec3(value);
      } else if (key == "look_at") {
        cam.look_at = parse_vec3(value);
      } else if (key == "up") {
        cam.up = parse_vec3(value);
      } else {
        fail("unknown key \"" + key + "\" in [camera]");
      }
    } else {
      fail("key \"" + key + "\" outside any section");
    }
  }

  if (spec.objects.empty()) throw ConfigError(path.string() + ": no [object] sections");
  if (spec.cameras.empty()) throw ConfigError(path.string() + ": no [camera] sections");
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (spec.objects[i].category.empty()) {
      throw ConfigError(path.string() + ": object " + std::to_string(i) + " has no category");
    }
  }
  return spec;
}

SceneSpec default_scene_spec() {
  SceneSpec spec;
  const char* names[5] = {"chair", "table", "lamp", "sofa", "plant"};
  for (int i = 0; i < 5; ++i) {
    SynthObject obj;
    obj.category = names[i];
    double a = 2.0 * std::numbers::pi * i / 5.0;
    obj.center = Eigen::Vector3d(1.5 * std::cos(a), 1.5 * std::sin(a), 0.25);
    obj.radius = 0.35;
    obj.points = 400;
    spec.objects.push_back(obj);
  }
  for (int i = 0; i < 8; ++i) {
    SynthCamera cam;
    double a = 2.0 * std::numbers::pi * i / 8.0;
    cam.position = Eigen::Vector3d(4.0 * std::cos(a), 4.0 * std::sin(a), 1.5);
    cam.look_at = Eigen::Vector3d(0.0, 0.0, 0.25);
    cam.up = Eigen::Vector3d(0.0, 0.0, 1.0);
    spec.cameras.push_back(cam);
  }
  return spec;
}

TokenMat category_code(int index, int num_categories) {
  if (index < 0 || index >= num_categories) throw Error("category index out of range");
  TokenMat code(1, num_categories);
  code.at(0, index) = 1.0f;
  return code;
}

int nearest_code(const TokenMat& tokens, int num_categories) {
  if (tokens.rows < 1 || tokens.cols != num_categories) {
    throw Error("token shape does not match the category code space");
  }
  int best = 0;
  float best_v = tokens.at(0, 0);
  for (int c = 1; c < num_categories; ++c) {
    if (tokens.at(0, c) > best_v) {
      best_v = tokens.at(0, c);
      best = c;
    }
  }
  return best;
}

SynthBundle generate_bundle(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.objects.empty()) throw ConfigError("scene spec has no objects");
  if (spec.cameras.empty()) throw ConfigError("scene spec has no cameras");
  if (spec.width <= 0 || spec.height <= 0) throw ConfigError("image dimensions must be positive");
  if (spec.depth_noise < 0.0) throw ConfigError("depth_noise must be >= 0");
  if (spec.mask_dropout < 0.0 || spec.mask_dropout >= 1.0) {
    throw ConfigError("mask_dropout must lie in [0, 1)");
  }

  SynthBundle out;

  std::map<std::string, int> category_index;
  std::vector<int> object_category(spec.objects.size());
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    auto [it, inserted] =
        category_index.try_emplace(spec.objects[i].category,
                                   static_cast<int>(out.categories.size()));
    if (inserted) out.categories.push_back(spec.objects[i].category);
    object_category[i] = it->second;
  }
  const int num_categories = static_cast<int>(out.categories.size());

  // Cloud and ground truth. Points of object i occupy one contiguous
  // index range.
  std::mt19937_64 cloud_rng(stream_seed(seed, 1));
  std::vector<int> point_object;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const SynthObject& obj = spec.objects[i];
    if (obj.points <= 0) throw ConfigError("object " + std::to_string(i) + " has no points");
    if (obj.radius <= 0.0) throw ConfigError("object " + std::to_string(i) + " has no extent");
    GroundTruthInstance gt;
    gt.label = obj.category;
    const auto color = category_color(object_category[i]);
    for (int p = 0; p < obj.points; ++p) {
      gt.points.push_back(static_cast<std::uint32_t>(out.scene.cloud.size()));
      point_object.push_back(static_cast<int>(i));
      Eigen::Vector3d pos = sample_in_ball(cloud_rng, obj.center, obj.radius);
      out.scene.cloud.positions.push_back(pos.cast<float>());
      out.scene.cloud.colors.push_back(color);
    }
    out.instances.push_back(std::move(gt));
  }

  double cx = spec.cx < 0.0 ? spec.width / 2.0 : spec.cx;
  double cy = spec.cy < 0.0 ? spec.height / 2.0 : spec.cy;
  out.scene.intrinsics = CameraIntrinsics::from_params(spec.fx, spec.fy, cx, cy);
  out.scene.lift.tau_depth = spec.tau_depth;

  std::mt19937_64 dropout_rng(stream_seed(seed, 2));
  std::mt19937_64 noise_rng(stream_seed(seed, 4));
  Gaussian gaussian;

  for (std::size_t c = 0; c < spec.cameras.size(); ++c) {
    FrameRecord frame;
    frame.frame_id = static_cast<int>(c);
    frame.intrinsics = out.scene.intrinsics;
    frame.pose = pose_from_lookat(spec.cameras[c]);
    frame.depth = DepthMap(spec.width, spec.height);

    // Z-buffer render: nearest point wins its pixel.
    const std::size_t pixels =
        static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height);
    std::vector<std::int32_t> winner(pixels, -1);
    for (std::size_t p = 0; p < out.scene.cloud.size(); ++p) {
      Eigen::Vector3d pos = out.scene.cloud.positions[p].cast<double>();
      PixelProjection proj = project_point(pos, frame.intrinsics, frame.pose);
      if (proj.d <= 0.0) continue;
      int col = static_cast<int>(std::floor(proj.u));
      int row = static_cast<int>(std::floor(proj.v));
      if (col < 0 || col >= spec.width || row < 0 || row >= spec.height) continue;
      std::size_t px = static_cast<std::size_t>(row) * spec.width + col;
      double& slot = frame.depth.meters[px];
      if (slot == 0.0 || proj.d < slot) {
        slot = proj.d;
        winner[px] = static_cast<std::int32_t>(p);
      }
    }

    // Masks come from the clean render; depth noise lands afterwards so
    // the mask sets stay the true visibility sets.
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      Mask2D mask;
      mask.frame_id = frame.frame_id;
      mask.mask_id = static_cast<int>(i);
      mask.width = spec.width;
      mask.height = spec.height;
      mask.pixels.assign(pixels, 0);
      for (std::size_t px = 0; px < pixels; ++px) {
        if (winner[px] >= 0 && point_object[static_cast<std::size_t>(winner[px])] ==
                                   static_cast<int>(i)) {
          mask.pixels[px] = 1;
          mask.pixel_count += 1;
        }
      }
      if (mask.pixel_count == 0) continue;
      if (spec.mask_dropout > 0.0 && uniform01(dropout_rng) < spec.mask_dropout) continue;
      mask.tokens = category_code(object_category[i], num_categories);
      frame.masks.push_back(std::move(mask));
    }

    if (spec.depth_noise > 0.0) {
      for (std::size_t px = 0; px < pixels; ++px) {
        double& d = frame.depth.meters[px];
        if (d <= 0.0) continue;
        d += spec.depth_noise * gaussian.sample(noise_rng);
        if (d <= 0.0) d = 0.0;
      }
    }

    out.scene.frames.push_back(std::move(frame));
  }

  out.proposals.num_points = static_cast<std::uint32_t>(out.scene.cloud.size());
  for (const GroundTruthInstance& gt : out.instances) {
    Proposal3D p;
    p.confidence = 1.0f;
    p.points = gt.points;
    out.proposals.proposals.push_back(std::move(p));
  }

  for (int i = 0; i < num_categories; ++i) {
    std::vector<double> vec(static_cast<std::size_t>(num_categories), 0.0);
    vec[static_cast<std::size_t>(i)] = 1.0;
    out.embeddings.emplace_back(out.categories[static_cast<std::size_t>(i)], std::move(vec));
  }
  return out;
}

void write_bundle(const SynthBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  save_ply(bundle.scene.cloud, dir / "cloud.ply");
  save_intrinsics(bundle.scene.intrinsics, dir / "intrinsics.txt");

  std::vector<TokenBlobEntry> token_entries;
  for (const FrameRecord& frame : bundle.scene.frames) {
    const std::string stem = std::to_string(frame.frame_id);
    save_depth_png(frame.depth, dir / "frames" / (stem + ".depth.png"));
    save_pose(frame.pose, dir / "frames" / (stem + ".pose.txt"));
    save_masks(frame.masks, frame.depth.width, frame.depth.height,
               dir / "frames" / (stem + ".masks.txt"));
    for (const Mask2D& mask : frame.masks) {
      token_entries.push_back({frame.frame_id, mask.mask_id, mask.tokens});
    }
  }
  save_token_blob(token_entries, dir / "tokens.bin", dir / "tokens.manifest.jsonl");

  std::ofstream manifest(dir / "scene.manifest");
  if (!manifest) throw Error("cannot open " + (dir / "scene.manifest").string() + " for writing");
  manifest << "cloud cloud.ply\n";
  manifest << "intrinsics intrinsics.txt\n";
  manifest << "frames frames\n";
  manifest << "tokens tokens.bin\n";
  manifest << "token_manifest tokens.manifest.jsonl\n";
  manifest << "tau_depth " << bundle.scene.lift.tau_depth << "\n";
  if (!manifest) throw Error("write failed: " + (dir / "scene.manifest").string());

  save_ground_truth(bundle.instances, dir / "gt.jsonl");
  save_proposals(bundle.proposals, dir / "proposals.bin");
  save_embeddings(bundle.embeddings, dir / "embeddings.jsonl");
}

}  // namespace oelift
