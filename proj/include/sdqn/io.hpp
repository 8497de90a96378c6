#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sdqn/encoder.hpp"
#include "sdqn/layout.hpp"
#include "sdqn/world.hpp"

namespace sdqn {

/// Shortest round-trip decimal for a double: deterministic, exact, compact.
/// Every number in CSV/JSONL output goes through here so re-deriving
/// aggregates from traces reproduces the emitted bytes.
inline std::string num_str(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string num_str(long v) { return std::to_string(v); }
inline std::string num_str(int v) { return std::to_string(v); }

// ---------------------------------------------------------------------------
// Minimal JSON line assembly (flat objects with fixed key order)
// ---------------------------------------------------------------------------

class JsonLine {
 public:
  JsonLine& field(const std::string& key, double v) { return raw(key, num_str(v)); }
  JsonLine& field(const std::string& key, int v) { return raw(key, std::to_string(v)); }
  JsonLine& field(const std::string& key, long v) { return raw(key, std::to_string(v)); }
  JsonLine& field(const std::string& key, std::uint64_t v) {
    return raw(key, std::to_string(v));
  }
  JsonLine& field(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }
  JsonLine& field(const std::string& key, const std::string& v) {
    return raw(key, "\"" + v + "\"");
  }
  JsonLine& raw(const std::string& key, const std::string& json) {
    body_ += body_.empty() ? "" : ",";
    body_ += "\"" + key + "\":" + json;
    return *this;
  }

  std::string str() const { return "{" + body_ + "}"; }

 private:
  std::string body_;
};

inline std::string json_ped_array(const std::vector<Pedestrian>& peds) {
  std::string out = "[";
  for (std::size_t i = 0; i < peds.size(); ++i) {
    if (i) out += ",";
    out += "[" + std::to_string(peds[i].id) + "," + num_str(peds[i].pos.x) + "," +
           num_str(peds[i].pos.y) + "]";
  }
  return out + "]";
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError(path + ": cannot open for writing");
  os << content;
  if (!os) throw ConfigError(path + ": write failed");
}

inline std::string csv_join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ",";
    out += cells[i];
  }
  return out + "\n";
}

// ---------------------------------------------------------------------------
// PPM rendering (binary P6)
// ---------------------------------------------------------------------------

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

class Image {
 public:
  Image(int w, int h, Rgb fill = {235, 235, 235}) : w_(w), h_(h), px_(std::size_t(w) * h, fill) {}

  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, Rgb c) {
    if (x >= 0 && x < w_ && y >= 0 && y < h_) px_[std::size_t(y) * w_ + x] = c;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y <= std::min(h_ - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(w_ - 1, x1); ++x)
        px_[std::size_t(y) * w_ + x] = c;
  }

  void save_ppm(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError(path + ": cannot open for writing");
    os << "P6\n" << w_ << " " << h_ << "\n255\n";
    for (const Rgb& p : px_) {
      os.put(char(p.r));
      os.put(char(p.g));
      os.put(char(p.b));
    }
  }

 private:
  int w_, h_;
  std::vector<Rgb> px_;
};

/// Top-down scene painter: roads, junction box, crosswalk bands, ego route,
/// the ego rectangle and pedestrian discs.
class SceneRenderer {
 public:
  explicit SceneRenderer(const IntersectionLayout& layout, double px_per_m = 8.0)
      : layout_(layout), scale_(px_per_m) {
    const double half = std::max(layout.box_w, layout.box_h) / 2.0 + layout.arm_length + 4.0;
    extent_ = half;
    size_ = int(2.0 * half * scale_);
  }

  Image render(const EgoState& ego, const std::vector<Pedestrian>& peds) const {
    Image img(size_, size_);
    paint_static(img);
    for (const Pedestrian& p : peds) disc(img, p.pos, 0.3, {200, 40, 40});
    rect(img, ego.footprint(), {30, 90, 200});
    return img;
  }

 private:
  void paint_static(Image& img) const {
    const Rgb road{120, 120, 120}, box{140, 140, 140}, walk{230, 220, 120},
        route{80, 160, 80};
    const double rw = layout_.road_half_width;
    // Arms: paint both axes then the junction box (three-way south arm has no
    // northern road, but overdraw is harmless for orientation).
    band(img, {-extent_, 0}, {extent_, 0}, rw, road);
    band(img, {0, -extent_}, {0, extent_}, rw, road);
    img.fill_rect(px({-layout_.box_w / 2, layout_.box_h / 2}).first,
                  px({-layout_.box_w / 2, layout_.box_h / 2}).second,
                  px({layout_.box_w / 2, -layout_.box_h / 2}).first,
                  px({layout_.box_w / 2, -layout_.box_h / 2}).second, box);
    for (const Crosswalk& cw : layout_.crosswalks) band(img, cw.a, cw.b, cw.width / 2, walk);
    for (const Vec2& p : layout_.ego_route.points()) disc(img, p, 0.15, route);
  }

  std::pair<int, int> px(Vec2 world) const {
    return {int((world.x + extent_) * scale_), int((extent_ - world.y) * scale_)};
  }

  void disc(Image& img, Vec2 c, double radius, Rgb color) const {
    const auto [cx, cy] = px(c);
    const int r = std::max(1, int(radius * scale_));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r) img.set(cx + dx, cy + dy, color);
  }

  void band(Image& img, Vec2 a, Vec2 b, double half_width, Rgb color) const {
    const auto [x0, y0] = px(a);
    const auto [x1, y1] = px(b);
    const int hw = int(half_width * scale_);
    const int lo_x = std::min(x0, x1) - hw, hi_x = std::max(x0, x1) + hw;
    const int lo_y = std::min(y0, y1) - hw, hi_y = std::max(y0, y1) + hw;
    img.fill_rect(lo_x, lo_y, hi_x, hi_y, color);
  }

  void rect(Image& img, const OrientedRect& r, Rgb color) const {
    const double reach = std::hypot(r.length, r.width) / 2.0;
    const auto [cx, cy] = px(r.center);
    const int span = int(reach * scale_) + 1;
    for (int dy = -span; dy <= span; ++dy)
      for (int dx = -span; dx <= span; ++dx) {
        const Vec2 world{r.center.x + dx / scale_, r.center.y - dy / scale_};
        if (r.contains(world)) img.set(cx + dx, cy + dy, color);
      }
  }

  const IntersectionLayout& layout_;
  double scale_;
  double extent_;
  int size_ = 0;
};

/// Grayscale heatmap of one state-tensor layer, for debugging encoders.
inline Image tensor_heatmap(const StateTensor& st, std::size_t layer) {
  float lo = 0.f, hi = 1e-9f;
  for (std::size_t r = 0; r < st.rows; ++r)
    for (std::size_t c = 0; c < st.cols; ++c) {
      const float v = st.grid.at3(layer, r, c);
      lo = std::min(lo, v);
      hi = std::max(hi, std::abs(v));
    }
  Image img(int(st.cols), int(st.rows));
  for (std::size_t r = 0; r < st.rows; ++r)
    for (std::size_t c = 0; c < st.cols; ++c) {
      const float v = std::abs(st.grid.at3(layer, r, c)) / hi;
      const auto g = std::uint8_t(255.f * (1.f - v));
      img.set(int(c), int(r), {g, g, g});
    }
  return img;
}

}  // namespace sdqn
