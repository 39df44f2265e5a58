#include "oelift/lifting.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "oelift/error.hpp"
#include "binio.hpp"

namespace oelift {

namespace {

void check_frame_dims(const FrameRecord& frame, const LiftConfig& config) {
  int w = config.image_width > 0 ? config.image_width : frame.depth.width;
  int h = config.image_height > 0 ? config.image_height : frame.depth.height;
  if (frame.depth.width != w || frame.depth.height != h) {
    throw ConfigError("frame " + std::to_string(frame.frame_id) + ": depth map is " +
                      std::to_string(frame.depth.width) + "x" + std::to_string(frame.depth.height) +
                      ", expected " + std::to_string(w) + "x" + std::to_string(h));
  }
  for (const Mask2D& m : frame.masks) {
    if (m.width != w || m.height != h) {
      throw ConfigError("frame " + std::to_string(frame.frame_id) + " mask " +
                        std::to_string(m.mask_id) + ": size " + std::to_string(m.width) + "x" +
                        std::to_string(m.height) + " does not match image " + std::to_string(w) +
                        "x" + std::to_string(h));
    }
  }
}

}  // namespace

const TokenField::Entry* TokenField::find(std::uint32_t point) const {
  auto it = entries_.find(point);
  return it == entries_.end() ? nullptr : &it->second;
}

std::uint32_t TokenField::count(std::uint32_t point) const {
  const Entry* e = find(point);
  return e ? e->count : 0;
}

void TokenField::add(std::uint32_t point, const TokenMat& tokens) {
  if (point >= num_points_) throw Error("token field: point index out of range");
  if (tokens.rows != rows_ || tokens.cols != cols_) {
    throw Error("token field: token shape mismatch");
  }
  Entry& e = entries_[point];
  if (e.sum.empty()) e.sum.assign(token_size(), 0.0f);
  e.count += 1;
  for (std::size_t i = 0; i < e.sum.size(); ++i) e.sum[i] += tokens.data[i];
}

void TokenField::merge(const TokenField& other) {
  if (other.num_points_ != num_points_ || other.rows_ != rows_ || other.cols_ != cols_) {
    throw Error("token field: merge shape mismatch");
  }
  for (const auto& [point, oe] : other.entries_) {
    Entry& e = entries_[point];
    if (e.sum.empty()) e.sum.assign(token_size(), 0.0f);
    e.count += oe.count;
    for (std::size_t i = 0; i < e.sum.size(); ++i) e.sum[i] += oe.sum[i];
  }
}

void TokenField::set_entry(std::uint32_t point, std::uint32_t count, std::vector<float> sum) {
  if (point >= num_points_) throw Error("token field: point index out of range");
  if (sum.size() != token_size()) throw Error("token field: entry size mismatch");
  Entry& e = entries_[point];
  e.count = count;
  e.sum = std::move(sum);
}

std::vector<std::uint32_t> TokenField::touched_points() const {
  std::vector<std::uint32_t> out;
  out.reserve(entries_.size());
  for (const auto& [point, e] : entries_) out.push_back(point);
  std::sort(out.begin(), out.end());
  return out;
}

bool TokenField::operator==(const TokenField& o) const {
  if (num_points_ != o.num_points_ || rows_ != o.rows_ || cols_ != o.cols_) return false;
  if (entries_.size() != o.entries_.size()) return false;
  for (const auto& [point, e] : entries_) {
    const Entry* oe = o.find(point);
    if (!oe || oe->count != e.count || oe->sum != e.sum) return false;
  }
  return true;
}

TokenMat NormalizedField::at(std::uint32_t point) const {
  TokenMat out(field_->token_rows(), field_->token_cols());
  const TokenField::Entry* e = field_->find(point);
  if (!e || e->count == 0) return out;
  float inv = 1.0f / static_cast<float>(e->count);
  for (std::size_t i = 0; i < e->sum.size(); ++i) out.data[i] = e->sum[i] * inv;
  return out;
}

std::vector<std::int64_t> project_visible_pixels(const PointCloud& cloud,
                                                 const FrameRecord& frame,
                                                 const LiftConfig& config) {
  check_frame_dims(frame, config);
  const int w = frame.depth.width;
  const int h = frame.depth.height;
  std::vector<std::int64_t> pixel(cloud.size(), -1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Eigen::Vector3d p = cloud.positions[i].cast<double>();
    PixelProjection proj = project_point(p, frame.intrinsics, frame.pose);
    if (proj.d <= 0.0) continue;
    int col = static_cast<int>(std::floor(proj.u));
    int row = static_cast<int>(std::floor(proj.v));
    if (col < 0 || col >= w || row < 0 || row >= h) continue;
    double captured = frame.depth.at(row, col);
    if (captured <= 0.0) continue;
    if (std::abs(proj.d - captured) > config.tau_depth) continue;
    pixel[i] = static_cast<std::int64_t>(row) * w + col;
  }
  return pixel;
}

VisibilityRecord compute_visibility(const PointCloud& cloud, const FrameRecord& frame,
                                    const Mask2D& mask, const LiftConfig& config) {
  std::vector<std::int64_t> pixel = project_visible_pixels(cloud, frame, config);
  VisibilityRecord rec;
  rec.frame_id = frame.frame_id;
  rec.mask_id = mask.mask_id;
  for (std::size_t i = 0; i < pixel.size(); ++i) {
    if (pixel[i] >= 0 && mask.contains(static_cast<std::size_t>(pixel[i]))) {
      rec.points.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return rec;
}

namespace {

// Float64 twin of TokenField used when wide accumulation is requested.
struct WideField {
  struct Entry {
    std::uint32_t count = 0;
    std::vector<double> sum;
  };
  std::unordered_map<std::uint32_t, Entry> entries;
  std::size_t token_size = 0;

  void add(std::uint32_t point, const TokenMat& tokens) {
    Entry& e = entries[point];
    if (e.sum.empty()) e.sum.assign(token_size, 0.0);
    e.count += 1;
    for (std::size_t i = 0; i < e.sum.size(); ++i) e.sum[i] += tokens.data[i];
  }
};

// Per-frame visibility, computed by a worker pool when threads != 1.
// Each frame's vector is exact and independent of the others, so the
// thread count cannot change the outcome.
std::vector<std::vector<std::int64_t>> project_frames(const PointCloud& cloud,
                                                      const std::vector<const FrameRecord*>& frames,
                                                      const LiftConfig& config, int threads) {
  std::vector<std::vector<std::int64_t>> pixels(frames.size());
  if (threads == 1 || frames.size() <= 1) {
    for (std::size_t f = 0; f < frames.size(); ++f) {
      pixels[f] = project_visible_pixels(cloud, *frames[f], config);
    }
    return pixels;
  }
  unsigned hw = std::thread::hardware_concurrency();
  unsigned n = threads > 0 ? static_cast<unsigned>(threads) : (hw > 0 ? hw : 1u);
  n = std::min<unsigned>(n, static_cast<unsigned>(frames.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(n);
  for (unsigned t = 0; t < n; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (;;) {
          std::size_t f = next.fetch_add(1);
          if (f >= frames.size()) break;
          pixels[f] = project_visible_pixels(cloud, *frames[f], config);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return pixels;
}

// Adds every contribution one at a time in (frame, mask, point) order.
template <typename Field>
void reduce_sequential(const std::vector<std::vector<const Mask2D*>>& masks,
                       const std::vector<std::vector<std::int64_t>>& pixels, Field& out) {
  for (std::size_t f = 0; f < masks.size(); ++f) {
    for (const Mask2D* mask : masks[f]) {
      const std::vector<std::int64_t>& pixel = pixels[f];
      for (std::size_t i = 0; i < pixel.size(); ++i) {
        if (pixel[i] >= 0 && mask->contains(static_cast<std::size_t>(pixel[i]))) {
          out.add(static_cast<std::uint32_t>(i), mask->tokens);
        }
      }
    }
  }
}

}  // namespace

TokenField accumulate_tokens(const PointCloud& cloud, const std::vector<FrameRecord>& frames,
                             const LiftConfig& config, const LiftOptions& options) {
  int rows = 0, cols = 0;
  bool found = false;
  for (const FrameRecord& f : frames) {
    for (const Mask2D& m : f.masks) {
      if (!found) {
        rows = m.tokens.rows;
        cols = m.tokens.cols;
        found = true;
      } else if (m.tokens.rows != rows || m.tokens.cols != cols) {
        throw ConfigError("frame " + std::to_string(f.frame_id) + " mask " +
                          std::to_string(m.mask_id) + ": token shape " +
                          std::to_string(m.tokens.rows) + "x" + std::to_string(m.tokens.cols) +
                          " differs from " + std::to_string(rows) + "x" + std::to_string(cols));
      }
    }
  }
  auto num_points = static_cast<std::uint32_t>(cloud.size());

  std::vector<const FrameRecord*> order;
  order.reserve(frames.size());
  for (const FrameRecord& f : frames) order.push_back(&f);
  if (options.deterministic) {
    std::stable_sort(order.begin(), order.end(),
                     [](const FrameRecord* a, const FrameRecord* b) {
                       return a->frame_id < b->frame_id;
                     });
  }
  std::vector<std::vector<const Mask2D*>> masks(order.size());
  for (std::size_t f = 0; f < order.size(); ++f) {
    for (const Mask2D& m : order[f]->masks) masks[f].push_back(&m);
    if (options.deterministic) {
      std::stable_sort(masks[f].begin(), masks[f].end(),
                       [](const Mask2D* a, const Mask2D* b) { return a->mask_id < b->mask_id; });
    }
  }

  std::vector<std::vector<std::int64_t>> pixels =
      project_frames(cloud, order, config, options.threads);

  if (options.wide_accumulation) {
    WideField total;
    total.token_size = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    reduce_sequential(masks, pixels, total);
    TokenField result(num_points, rows, cols);
    for (const auto& [point, e] : total.entries) {
      std::vector<float> sum(e.sum.size());
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = static_cast<float>(e.sum[i]);
      result.set_entry(point, e.count, std::move(sum));
    }
    return result;
  }

  TokenField result(num_points, rows, cols);
  reduce_sequential(masks, pixels, result);
  return result;
}

NormalizedField normalize_field(const TokenField& field) { return NormalizedField(field); }

void save_field(const TokenField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  binio::write_magic(out, "OEF3");
  binio::write_u32(out, 1);
  binio::write_u32(out, field.num_points());
  binio::write_u32(out, static_cast<std::uint32_t>(field.token_rows()));
  binio::write_u32(out, static_cast<std::uint32_t>(field.token_cols()));
  std::vector<std::uint32_t> points = field.touched_points();
  binio::write_u32(out, static_cast<std::uint32_t>(points.size()));
  for (std::uint32_t point : points) {
    const TokenField::Entry* e = field.find(point);
    binio::write_u32(out, point);
    binio::write_u32(out, e->count);
    binio::write_f32_array(out, e->sum.data(), e->sum.size());
  }
  if (!out) throw Error("write failed: " + path.string());
}

TokenField load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string what = path.string();
  binio::expect_magic(in, "OEF3", what);
  std::uint32_t version = binio::read_u32(in, what);
  if (version != 1) throw FormatError(what + ": unsupported version " + std::to_string(version));
  std::uint32_t n = binio::read_u32(in, what);
  std::uint32_t rows = binio::read_u32(in, what);
  std::uint32_t cols = binio::read_u32(in, what);
  std::uint32_t m = binio::read_u32(in, what);
  TokenField field(n, static_cast<int>(rows), static_cast<int>(cols));
  const std::size_t token_size = static_cast<std::size_t>(rows) * cols;
  std::uint32_t prev = 0;
  for (std::uint32_t r = 0; r < m; ++r) {
    std::uint32_t point = binio::read_u32(in, what);
    if (r > 0 && point <= prev) throw FormatError(what + ": point indices not ascending");
    if (point >= n) throw FormatError(what + ": point index " + std::to_string(point) +
                                      " out of range for cloud of " + std::to_string(n));
    prev = point;
    std::uint32_t count = binio::read_u32(in, what);
    std::vector<float> sum(token_size);
    binio::read_f32_array(in, sum.data(), sum.size(), what);
    field.set_entry(point, count, std::move(sum));
  }
  return field;
}

}  // namespace oelift
