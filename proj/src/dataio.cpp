#include "oelift/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "oelift/error.hpp"
#include "binio.hpp"

namespace oelift {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string shortest(float v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

void check_write(const std::ostream& out, const std::filesystem::path& path) {
  if (!out) throw Error("write failed: " + path.string());
}

[[noreturn]] void bad_line(const std::filesystem::path& path, std::size_t line,
                           const std::string& why) {
  throw FormatError(path.string() + ":" + std::to_string(line) + ": " + why);
}

}  // namespace

// ---------------------------------------------------------------- PLY

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
};

std::size_t ply_type_size(const std::string& type, const std::filesystem::path& path) {
  if (type == "char" || type == "int8" || type == "uchar" || type == "uint8") return 1;
  if (type == "short" || type == "int16" || type == "ushort" || type == "uint16") return 2;
  if (type == "int" || type == "int32" || type == "uint" || type == "uint32") return 4;
  if (type == "float" || type == "float32") return 4;
  if (type == "double" || type == "float64") return 8;
  throw FormatError(path.string() + ": unsupported property type \"" + type + "\"");
}

}  // namespace

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) bad_line(path, line_no + 1, "unexpected end of header");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") bad_line(path, line_no, "not a ply file");
  bool binary = false;
  {
    std::string& fmt = next_line();
    if (fmt == "format ascii 1.0") {
      binary = false;
    } else if (fmt == "format binary_little_endian 1.0") {
      binary = true;
    } else {
      bad_line(path, line_no, "unsupported format \"" + fmt + "\"");
    }
  }

  std::size_t vertex_count = 0;
  std::vector<PlyProperty> props;
  bool in_vertex = false;
  bool saw_vertex = false;
  for (;;) {
    std::string& l = next_line();
    if (l == "end_header") break;
    std::istringstream words(l);
    std::string word;
    words >> word;
    if (word == "comment" || word == "obj_info" || l.empty()) continue;
    if (word == "element") {
      std::string name;
      std::size_t count = 0;
      words >> name >> count;
      if (name == "vertex") {
        saw_vertex = true;
        in_vertex = true;
        vertex_count = count;
      } else {
        if (!saw_vertex) {
          bad_line(path, line_no, "element \"" + name + "\" before vertex is unsupported");
        }
        in_vertex = false;
        if (count > 0 && binary) {
          // Trailing binary elements cannot be skipped without parsing
          // them; the vertex block below is all this loader reads, and
          // since it is first, trailing elements are simply ignored.
        }
      }
      continue;
    }
    if (word == "property") {
      if (!in_vertex) continue;  // trailing elements are ignored wholesale
      std::string type;
      words >> type;
      if (type == "list") {
        bad_line(path, line_no, "list properties on vertices are unsupported");
      }
      std::string name;
      words >> name;
      props.push_back({name, type});
      continue;
    }
    bad_line(path, line_no, "unrecognized header line \"" + l + "\"");
  }

  if (!saw_vertex) throw FormatError(path.string() + ": no vertex element");
  if (vertex_count == 0) throw FormatError(path.string() + ": empty vertex element");

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const PlyProperty& p = props[i];
    auto want = [&](const char* name, const char* t1, const char* t2, int& slot) {
      if (p.name != name) return false;
      if (p.type != t1 && p.type != t2) {
        throw FormatError(path.string() + ": property \"" + p.name + "\" has type \"" + p.type +
                          "\", expected " + t1);
      }
      slot = static_cast<int>(i);
      return true;
    };
    if (want("x", "float", "float32", ix) || want("y", "float", "float32", iy) ||
        want("z", "float", "float32", iz) || want("red", "uchar", "uint8", ir) ||
        want("green", "uchar", "uint8", ig) || want("blue", "uchar", "uint8", ib)) {
      continue;
    }
    ply_type_size(p.type, path);  // validates skippable types
  }
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError(path.string() + ": missing x/y/z properties");
  if (ir < 0 || ig < 0 || ib < 0) {
    throw FormatError(path.string() + ": missing red/green/blue properties");
  }

  PointCloud cloud;
  cloud.positions.resize(vertex_count);
  cloud.colors.resize(vertex_count);

  if (!binary) {
    std::vector<std::string> tokens(props.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
      for (std::size_t i = 0; i < props.size(); ++i) {
        if (!(in >> tokens[i])) {
          throw FormatError(path.string() + ": truncated vertex data at vertex " +
                            std::to_string(v));
        }
      }
      auto as_float = [&](int slot) {
        const std::string& t = tokens[static_cast<std::size_t>(slot)];
        float out = 0.0f;
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
        if (ec != std::errc() || ptr != t.data() + t.size()) {
          throw FormatError(path.string() + ": bad float \"" + t + "\" at vertex " +
                            std::to_string(v));
        }
        return out;
      };
      auto as_byte = [&](int slot) {
        const std::string& t = tokens[static_cast<std::size_t>(slot)];
        int out = 0;
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
        if (ec != std::errc() || ptr != t.data() + t.size() || out < 0 || out > 255) {
          throw FormatError(path.string() + ": bad color value \"" + t + "\" at vertex " +
                            std::to_string(v));
        }
        return static_cast<std::uint8_t>(out);
      };
      cloud.positions[v] = Eigen::Vector3f(as_float(ix), as_float(iy), as_float(iz));
      cloud.colors[v] = {as_byte(ir), as_byte(ig), as_byte(ib)};
    }
  } else {
    std::vector<std::size_t> offsets(props.size());
    std::size_t stride = 0;
    for (std::size_t i = 0; i < props.size(); ++i) {
      offsets[i] = stride;
      stride += ply_type_size(props[i].type, path);
    }
    std::vector<char> row(stride);
    for (std::size_t v = 0; v < vertex_count; ++v) {
      in.read(row.data(), static_cast<std::streamsize>(stride));
      if (!in) {
        throw FormatError(path.string() + ": truncated vertex data at vertex " + std::to_string(v));
      }
      auto read_float = [&](int slot) {
        float out;
        std::memcpy(&out, row.data() + offsets[static_cast<std::size_t>(slot)], 4);
        return out;
      };
      auto read_byte = [&](int slot) {
        return static_cast<std::uint8_t>(row[offsets[static_cast<std::size_t>(slot)]]);
      };
      cloud.positions[v] = Eigen::Vector3f(read_float(ix), read_float(iy), read_float(iz));
      cloud.colors[v] = {read_byte(ir), read_byte(ig), read_byte(ib)};
    }
  }

  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (!cloud.positions[v].allFinite()) {
      throw FormatError(path.string() + ": non-finite position at vertex " + std::to_string(v));
    }
  }
  return cloud;
}

void save_ply(const PointCloud& cloud, const std::filesystem::path& path, PlyFormat format) {
  std::ofstream out = open_output(path, std::ios::binary);
  out << "ply\n";
  out << (format == PlyFormat::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n");
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  if (format == PlyFormat::kAscii) {
    for (std::size_t v = 0; v < cloud.size(); ++v) {
      const Eigen::Vector3f& p = cloud.positions[v];
      const auto& c = cloud.colors[v];
      out << shortest(p.x()) << ' ' << shortest(p.y()) << ' ' << shortest(p.z()) << ' '
          << static_cast<int>(c[0]) << ' ' << static_cast<int>(c[1]) << ' '
          << static_cast<int>(c[2]) << '\n';
    }
  } else {
    for (std::size_t v = 0; v < cloud.size(); ++v) {
      float xyz[3] = {cloud.positions[v].x(), cloud.positions[v].y(), cloud.positions[v].z()};
      binio::write_f32_array(out, xyz, 3);
      out.write(reinterpret_cast<const char*>(cloud.colors[v].data()), 3);
    }
  }
  check_write(out, path);
}

// ------------------------------------------------- intrinsics and pose

CameraIntrinsics load_intrinsics(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  Eigen::Matrix3d k;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(in >> k(r, c))) {
        throw FormatError(path.string() + ": expected 9 numbers for a 3x3 matrix");
      }
    }
  }
  try {
    return CameraIntrinsics(k);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_intrinsics(const CameraIntrinsics& intrinsics, const std::filesystem::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  const Eigen::Matrix3d& k = intrinsics.matrix();
  for (int r = 0; r < 3; ++r) {
    out << shortest(k(r, 0)) << ' ' << shortest(k(r, 1)) << ' ' << shortest(k(r, 2)) << '\n';
  }
  check_write(out, path);
}

CameraPose load_pose(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!(in >> m(r, c))) {
        throw FormatError(path.string() + ": expected 16 numbers for a 4x4 matrix");
      }
    }
  }
  try {
    CameraPose cam_to_world = CameraPose::from_matrix4(m, CameraPose::Direction::kCameraToWorld);
    return cam_to_world.world_to_camera();
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_pose(const CameraPose& pose, const std::filesystem::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  Eigen::Matrix4d m = pose.world_to_camera().inverse().matrix4();
  for (int r = 0; r < 4; ++r) {
    out << shortest(m(r, 0)) << ' ' << shortest(m(r, 1)) << ' ' << shortest(m(r, 2)) << ' '
        << shortest(m(r, 3)) << '\n';
  }
  check_write(out, path);
}

// ---------------------------------------------------------------- masks

std::vector<Mask2D> load_masks(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  long long height = 0, width = 0, num_masks = 0;
  if (!(in >> height >> width >> num_masks) || height <= 0 || width <= 0 || num_masks < 0) {
    throw FormatError(path.string() + ": bad header, expected \"height width num_masks\"");
  }
  const std::size_t pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  std::vector<Mask2D> masks;
  masks.reserve(static_cast<std::size_t>(num_masks));
  for (long long m = 0; m < num_masks; ++m) {
    long long mask_id = 0, runs = 0;
    if (!(in >> mask_id >> runs) || runs < 0) {
      throw FormatError(path.string() + ": bad mask header for mask " + std::to_string(m));
    }
    Mask2D mask;
    mask.mask_id = static_cast<int>(mask_id);
    mask.width = static_cast<int>(width);
    mask.height = static_cast<int>(height);
    mask.pixels.assign(pixels, 0);
    long long prev_end = -1;
    for (long long r = 0; r < runs; ++r) {
      long long start = 0, length = 0;
      if (!(in >> start >> length) || start < 0 || length <= 0 ||
          start + length > static_cast<long long>(pixels)) {
        throw FormatError(path.string() + ": bad run in mask " + std::to_string(mask_id));
      }
      if (start <= prev_end) {
        throw FormatError(path.string() + ": overlapping or unsorted runs in mask " +
                          std::to_string(mask_id));
      }
      prev_end = start + length - 1;
      std::fill(mask.pixels.begin() + start, mask.pixels.begin() + start + length, 1);
      mask.pixel_count += static_cast<std::size_t>(length);
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

void save_masks(const std::vector<Mask2D>& masks, int width, int height,
                const std::filesystem::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  out << height << ' ' << width << ' ' << masks.size() << '\n';
  for (const Mask2D& mask : masks) {
    if (mask.width != width || mask.height != height) {
      throw Error("mask " + std::to_string(mask.mask_id) + " size does not match image");
    }
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    const std::size_t pixels = mask.pixels.size();
    std::size_t i = 0;
    while (i < pixels) {
      if (!mask.pixels[i]) {
        ++i;
        continue;
      }
      std::size_t start = i;
      while (i < pixels && mask.pixels[i]) ++i;
      runs.emplace_back(start, i - start);
    }
    out << mask.mask_id << ' ' << runs.size() << '\n';
    for (const auto& [start, length] : runs) out << start << ' ' << length << '\n';
  }
  check_write(out, path);
}

// ---------------------------------------------------------- token blob

TokenBlobReader::TokenBlobReader(const std::filesystem::path& blob_path,
                                 const std::filesystem::path& manifest_path) {
  blob_.open(blob_path, std::ios::binary);
  if (!blob_) throw Error("cannot open " + blob_path.string());
  blob_name_ = blob_path.string();
  binio::expect_magic(blob_, "OETK", blob_name_);
  std::uint32_t version = binio::read_u32(blob_, blob_name_);
  if (version != 1) {
    throw FormatError(blob_name_ + ": unsupported version " + std::to_string(version));
  }
  rows_ = static_cast<int>(binio::read_u32(blob_, blob_name_));
  cols_ = static_cast<int>(binio::read_u32(blob_, blob_name_));
  blob_.seekg(0, std::ios::end);
  blob_size_ = static_cast<std::uint64_t>(blob_.tellg());

  std::ifstream manifest = open_input(manifest_path, std::ios::in);
  std::string line;
  std::size_t line_no = 0;
  const std::uint64_t block = static_cast<std::uint64_t>(rows_) * cols_ * 4;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      bad_line(manifest_path, line_no, e.what());
    }
    if (!j.contains("frame") || !j.contains("mask_id") || !j.contains("offset")) {
      bad_line(manifest_path, line_no, "expected keys frame, mask_id, offset");
    }
    int frame = j.at("frame").get<int>();
    int mask_id = j.at("mask_id").get<int>();
    auto offset = j.at("offset").get<std::uint64_t>();
    if (offset + block > blob_size_) {
      bad_line(manifest_path, line_no, "offset " + std::to_string(offset) + " runs past the blob");
    }
    auto [it, inserted] = offsets_.try_emplace({frame, mask_id}, offset);
    if (!inserted) {
      bad_line(manifest_path, line_no,
               "duplicate entry for frame " + std::to_string(frame) + " mask " +
                   std::to_string(mask_id));
    }
  }
}

bool TokenBlobReader::contains(int frame_id, int mask_id) const {
  return offsets_.count({frame_id, mask_id}) != 0;
}

TokenMat TokenBlobReader::fetch(int frame_id, int mask_id) {
  auto it = offsets_.find({frame_id, mask_id});
  if (it == offsets_.end()) {
    throw Error(blob_name_ + ": no tokens for frame " + std::to_string(frame_id) + " mask " +
                std::to_string(mask_id));
  }
  blob_.clear();
  blob_.seekg(static_cast<std::streamoff>(it->second));
  TokenMat out(rows_, cols_);
  binio::read_f32_array(blob_, out.data.data(), out.data.size(), blob_name_);
  return out;
}

void save_token_blob(const std::vector<TokenBlobEntry>& entries,
                     const std::filesystem::path& blob_path,
                     const std::filesystem::path& manifest_path) {
  int rows = entries.empty() ? 0 : entries.front().tokens.rows;
  int cols = entries.empty() ? 0 : entries.front().tokens.cols;
  for (const TokenBlobEntry& e : entries) {
    if (e.tokens.rows != rows || e.tokens.cols != cols) {
      throw Error("token blob entries disagree on token shape");
    }
  }
  std::ofstream blob = open_output(blob_path, std::ios::binary);
  binio::write_magic(blob, "OETK");
  binio::write_u32(blob, 1);
  binio::write_u32(blob, static_cast<std::uint32_t>(rows));
  binio::write_u32(blob, static_cast<std::uint32_t>(cols));
  std::ofstream manifest = open_output(manifest_path, std::ios::out);
  std::uint64_t offset = 16;
  const std::uint64_t block = static_cast<std::uint64_t>(rows) * cols * 4;
  for (const TokenBlobEntry& e : entries) {
    binio::write_f32_array(blob, e.tokens.data.data(), e.tokens.data.size());
    ordered_json j;
    j["frame"] = e.frame_id;
    j["mask_id"] = e.mask_id;
    j["offset"] = offset;
    manifest << j.dump() << '\n';
    offset += block;
  }
  check_write(blob, blob_path);
  check_write(manifest, manifest_path);
}

// ----------------------------------------------------------- proposals

ProposalSet load_proposals(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::binary);
  const std::string what = path.string();
  binio::expect_magic(in, "OEPR", what);
  std::uint32_t version = binio::read_u32(in, what);
  if (version != 1) throw FormatError(what + ": unsupported version " + std::to_string(version));
  ProposalSet set;
  set.num_points = binio::read_u32(in, what);
  std::uint32_t k = binio::read_u32(in, what);
  set.proposals.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    Proposal3D p;
    p.confidence = binio::read_f32(in, what);
    std::uint32_t count = binio::read_u32(in, what);
    p.points.resize(count);
    for (std::uint32_t c = 0; c < count; ++c) p.points[c] = binio::read_u32(in, what);
    try {
      validate_proposal(p, set.num_points);
    } catch (const Error& e) {
      throw FormatError(what + ": proposal " + std::to_string(i) + ": " + e.what());
    }
    set.proposals.push_back(std::move(p));
  }
  return set;
}

void save_proposals(const ProposalSet& set, const std::filesystem::path& path) {
  for (std::size_t i = 0; i < set.proposals.size(); ++i) {
    validate_proposal(set.proposals[i], set.num_points);
  }
  std::ofstream out = open_output(path, std::ios::binary);
  binio::write_magic(out, "OEPR");
  binio::write_u32(out, 1);
  binio::write_u32(out, set.num_points);
  binio::write_u32(out, static_cast<std::uint32_t>(set.proposals.size()));
  for (const Proposal3D& p : set.proposals) {
    binio::write_f32(out, p.confidence);
    binio::write_u32(out, static_cast<std::uint32_t>(p.points.size()));
    for (std::uint32_t idx : p.points) binio::write_u32(out, idx);
  }
  check_write(out, path);
}

// ---------------------------------------------------------------- JSONL

namespace {

std::vector<std::uint32_t> points_from_json(const ordered_json& j,
                                            const std::filesystem::path& path, std::size_t line) {
  if (!j.is_array()) bad_line(path, line, "\"points\" must be an array");
  std::vector<std::uint32_t> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_unsigned() && !v.is_number_integer()) {
      bad_line(path, line, "point indices must be non-negative integers");
    }
    long long idx = v.get<long long>();
    if (idx < 0) bad_line(path, line, "point indices must be non-negative");
    out.push_back(static_cast<std::uint32_t>(idx));
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i] <= out[i - 1]) bad_line(path, line, "point indices must be strictly ascending");
  }
  return out;
}

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in = open_input(path, std::ios::in);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      bad_line(path, line_no, e.what());
    }
    fn(j, line_no);
  }
}

}  // namespace

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for_each_jsonl(path, [&](const ordered_json& j, std::size_t line) {
    if (!j.contains("label") || !j.contains("points")) {
      bad_line(path, line, "expected keys label, points");
    }
    Prediction p;
    p.label = j.at("label").get<std::string>();
    p.confidence = j.value("confidence", 1.0f);
    p.points = points_from_json(j.at("points"), path, line);
    if (p.points.empty()) bad_line(path, line, "prediction has an empty point set");
    if (!std::isfinite(p.confidence) || p.confidence < 0.0f || p.confidence > 1.0f) {
      bad_line(path, line, "confidence must lie in [0, 1]");
    }
    out.push_back(std::move(p));
  });
  return out;
}

void save_predictions(const std::vector<Prediction>& predictions,
                      const std::filesystem::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  for (const Prediction& p : predictions) {
    ordered_json j;
    j["label"] = p.label;
    j["confidence"] = p.confidence;
    j["points"] = p.points;
    out << j.dump() << '\n';
  }
  check_write(out, path);
}

std::vector<GroundTruthInstance> load_ground_truth(const std::filesystem::path& path) {
  std::vector<GroundTruthInstance> out;
  for_each_jsonl(path, [&](const ordered_json& j, std::size_t line) {
    if (!j.contains("label") || !j.contains("points")) {
      bad_line(path, line, "expected keys label, points");
    }
    GroundTruthInstance g;
    g.label = j.at("label").get<std::string>();
    g.points = points_from_json(j.at("points"), path, line);
    if (g.points.empty()) bad_line(path, line, "instance has an empty point set");
    out.push_back(std::move(g));
  });
  return out;
}

void save_ground_truth(const std::vector<GroundTruthInstance>& instances,
                       const std::filesystem::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  for (const GroundTruthInstance& g : instances) {
    ordered_json j;
    j["label"] = g.label;
    j["points"] = g.points;
    out << j.dump() << '\n';
  }
  check_write(out, path);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  EmbeddingTable table;
  for_each_jsonl(path, [&](const ordered_json& j, std::size_t line) {
    if (!j.contains("label") || !j.contains("vector")) {
      bad_line(path, line, "expected keys label, vector");
    }
    auto vec = j.at("vector").get<std::vector<double>>();
    try {
      table.insert(j.at("label").get<std::string>(), std::move(vec));
    } catch (const Error& e) {
      bad_line(path, line, e.what());
    }
  });
  return table;
}

void save_embeddings(const std::vector<std::pair<std::string, std::vector<double>>>& rows,
                     const std::filesystem::path& path) {
  std::ofstream out = open_output(path, std::ios::out);
  for (const auto& [label, vec] : rows) {
    ordered_json j;
    j["label"] = label;
    j["vector"] = vec;
    out << j.dump() << '\n';
  }
  check_write(out, path);
}

CategoryGroups load_category_groups(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError(path.string() + ": expected an object of groups");
  CategoryGroups groups;
  for (const auto& [name, members] : j.items()) {
    if (!members.is_array()) {
      throw FormatError(path.string() + ": group \"" + name + "\" must be an array of labels");
    }
    groups.groups[name] = members.get<std::vector<std::string>>();
  }
  return groups;
}

// ---------------------------------------------------------------- scene

SceneBundle load_scene(const std::filesystem::path& manifest_path) {
  std::ifstream in = open_input(manifest_path, std::ios::in);
  const std::filesystem::path base = manifest_path.parent_path();

  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  const std::set<std::string> known = {"cloud",          "intrinsics", "frames", "tokens",
                                       "token_manifest", "tau_depth",  "stride"};
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream words(line);
    std::string key, value;
    words >> key >> value;
    if (key.empty() || value.empty()) bad_line(manifest_path, line_no, "expected \"key value\"");
    if (!known.count(key)) bad_line(manifest_path, line_no, "unknown key \"" + key + "\"");
    if (kv.count(key)) bad_line(manifest_path, line_no, "duplicate key \"" + key + "\"");
    kv[key] = value;
  }
  for (const char* req : {"cloud", "intrinsics", "frames", "tokens", "token_manifest"}) {
    if (!kv.count(req)) {
      throw ConfigError(manifest_path.string() + ": missing required key \"" + req + "\"");
    }
  }

  auto resolve = [&](const std::string& rel) {
    std::filesystem::path p(rel);
    return p.is_absolute() ? p : base / p;
  };

  SceneBundle bundle;
  bundle.cloud = load_ply(resolve(kv.at("cloud")));
  bundle.intrinsics = load_intrinsics(resolve(kv.at("intrinsics")));
  if (kv.count("tau_depth")) {
    try {
      bundle.lift.tau_depth = std::stod(kv.at("tau_depth"));
    } catch (const std::exception&) {
      throw ConfigError(manifest_path.string() + ": bad tau_depth \"" + kv.at("tau_depth") + "\"");
    }
    if (!(bundle.lift.tau_depth > 0.0)) {
      throw ConfigError(manifest_path.string() + ": tau_depth must be positive");
    }
  }
  int stride = 1;
  if (kv.count("stride")) {
    try {
      stride = std::stoi(kv.at("stride"));
    } catch (const std::exception&) {
      throw ConfigError(manifest_path.string() + ": bad stride \"" + kv.at("stride") + "\"");
    }
    if (stride < 1) throw ConfigError(manifest_path.string() + ": stride must be >= 1");
  }

  const std::filesystem::path frames_dir = resolve(kv.at("frames"));
  if (!std::filesystem::is_directory(frames_dir)) {
    throw ConfigError(frames_dir.string() + " is not a directory");
  }
  std::vector<int> frame_ids;
  for (const auto& entry : std::filesystem::directory_iterator(frames_dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = ".depth.png";
    if (name.size() <= suffix.size() || name.substr(name.size() - suffix.size()) != suffix) {
      continue;
    }
    const std::string stem = name.substr(0, name.size() - suffix.size());
    int id = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), id);
    if (ec != std::errc() || ptr != stem.data() + stem.size()) continue;
    frame_ids.push_back(id);
  }
  std::sort(frame_ids.begin(), frame_ids.end());

  TokenBlobReader tokens(resolve(kv.at("tokens")), resolve(kv.at("token_manifest")));

  for (std::size_t i = 0; i < frame_ids.size(); ++i) {
    if (i % static_cast<std::size_t>(stride) != 0) continue;
    int id = frame_ids[i];
    const std::filesystem::path depth_path = frames_dir / (std::to_string(id) + ".depth.png");
    const std::filesystem::path pose_path = frames_dir / (std::to_string(id) + ".pose.txt");
    const std::filesystem::path masks_path = frames_dir / (std::to_string(id) + ".masks.txt");
    if (!std::filesystem::exists(pose_path)) {
      bundle.warnings.push_back("frame " + std::to_string(id) + ": no pose file, skipped");
      continue;
    }
    FrameRecord frame;
    frame.frame_id = id;
    frame.intrinsics = bundle.intrinsics;
    frame.pose = load_pose(pose_path);
    frame.depth = load_depth_png(depth_path);
    if (std::filesystem::exists(masks_path)) {
      frame.masks = load_masks(masks_path);
      for (Mask2D& mask : frame.masks) {
        mask.frame_id = id;
        mask.tokens = tokens.fetch(id, mask.mask_id);
      }
    }
    const std::filesystem::path color_path = frames_dir / (std::to_string(id) + ".color.png");
    if (std::filesystem::exists(color_path)) frame.color_path = color_path.string();
    bundle.frames.push_back(std::move(frame));
  }
  return bundle;
}

// --------------------------------------------------------------- report

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "tsv") return ReportFormat::kTsv;
  throw ConfigError("unknown report format \"" + name + "\" (expected json or tsv)");
}

std::string render_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::kJson) {
    ordered_json j;
    j["oe"] = report.oe;
    j["ap"] = report.ap.ap;
    j["ap50"] = report.ap.ap50;
    j["ap25"] = report.ap.ap25;
    j["ar"] = report.ap.ar;
    j["rc50"] = report.ap.rc50;
    j["rc25"] = report.ap.rc25;
    ordered_json per_cat = ordered_json::object();
    for (const auto& [cat, v] : report.ap.per_category_ap) per_cat[cat] = v;
    j["per_category_ap"] = per_cat;
    if (!report.ap.per_group_ap.empty()) {
      ordered_json per_group = ordered_json::object();
      for (const auto& [g, v] : report.ap.per_group_ap) per_group[g] = v;
      j["per_group_ap"] = per_group;
    }
    ordered_json pairs = ordered_json::array();
    for (const OEMatch& m : report.oe_pairs) {
      ordered_json p;
      p["prediction"] = m.prediction;
      p["ground_truth"] = m.ground_truth;
      p["iou"] = m.iou;
      p["sim"] = m.sim;
      p["score"] = m.score;
      pairs.push_back(p);
    }
    j["oe_pairs"] = pairs;
    ordered_json lm = ordered_json::object();
    std::vector<std::string> keys;
    for (const auto& [from, to] : report.label_map) keys.push_back(from);
    std::sort(keys.begin(), keys.end());
    for (const std::string& k : keys) lm[k] = report.label_map.at(k);
    j["label_map"] = lm;
    return j.dump(2) + "\n";
  }

  std::string out;
  auto row = [&](const std::string& key, double v) {
    out += key;
    out += '\t';
    out += shortest(v);
    out += '\n';
  };
  row("oe", report.oe);
  row("ap", report.ap.ap);
  row("ap50", report.ap.ap50);
  row("ap25", report.ap.ap25);
  row("ar", report.ap.ar);
  row("rc50", report.ap.rc50);
  row("rc25", report.ap.rc25);
  for (const auto& [cat, v] : report.ap.per_category_ap) row("ap_category." + cat, v);
  for (const auto& [g, v] : report.ap.per_group_ap) row("ap_group." + g, v);
  return out;
}

void write_report(const EvalReport& report, const std::filesystem::path& path,
                  ReportFormat format) {
  std::ofstream out = open_output(path, std::ios::out);
  out << render_report(report, format);
  check_write(out, path);
}

// ----------------------------------------------------------- aggregated

void save_aggregated(const std::vector<AggregatedTokens>& rows,
                     const std::filesystem::path& blob_path,
                     const std::filesystem::path& sidecar_path) {
  int trows = 0, tcols = 0;
  for (const AggregatedTokens& a : rows) {
    if (a.tokens.rows != 0 || a.tokens.cols != 0) {
      trows = a.tokens.rows;
      tcols = a.tokens.cols;
      break;
    }
  }
  std::ofstream blob = open_output(blob_path, std::ios::binary);
  binio::write_magic(blob, "OETK");
  binio::write_u32(blob, 1);
  binio::write_u32(blob, static_cast<std::uint32_t>(trows));
  binio::write_u32(blob, static_cast<std::uint32_t>(tcols));
  std::ofstream sidecar = open_output(sidecar_path, std::ios::out);
  const TokenMat zero(trows, tcols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const AggregatedTokens& a = rows[i];
    const TokenMat& block = (a.tokens.rows == trows && a.tokens.cols == tcols) ? a.tokens : zero;
    binio::write_f32_array(blob, block.data.data(), block.data.size());
    ordered_json j;
    j["proposal"] = i;
    j["support"] = a.support;
    j["total_weight"] = a.total_weight;
    j["empty"] = a.empty;
    sidecar << j.dump() << '\n';
  }
  check_write(blob, blob_path);
  check_write(sidecar, sidecar_path);
}

std::vector<AggregatedTokens> load_aggregated(const std::filesystem::path& blob_path,
                                              const std::filesystem::path& sidecar_path) {
  std::ifstream blob = open_input(blob_path, std::ios::binary);
  const std::string what = blob_path.string();
  binio::expect_magic(blob, "OETK", what);
  std::uint32_t version = binio::read_u32(blob, what);
  if (version != 1) throw FormatError(what + ": unsupported version " + std::to_string(version));
  int rows = static_cast<int>(binio::read_u32(blob, what));
  int cols = static_cast<int>(binio::read_u32(blob, what));

  std::vector<AggregatedTokens> out;
  for_each_jsonl(sidecar_path, [&](const ordered_json& j, std::size_t line) {
    if (!j.contains("proposal") || !j.contains("support") || !j.contains("total_weight") ||
        !j.contains("empty")) {
      bad_line(sidecar_path, line, "expected keys proposal, support, total_weight, empty");
    }
    if (j.at("proposal").get<std::size_t>() != out.size()) {
      bad_line(sidecar_path, line, "proposal indices must be 0, 1, 2, ... in order");
    }
    AggregatedTokens a;
    a.tokens = TokenMat(rows, cols);
    binio::read_f32_array(blob, a.tokens.data.data(), a.tokens.data.size(), what);
    a.support = j.at("support").get<std::size_t>();
    a.total_weight = j.at("total_weight").get<double>();
    a.empty = j.at("empty").get<bool>();
    out.push_back(std::move(a));
  });
  return out;
}

}  // namespace oelift
