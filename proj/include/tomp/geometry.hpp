#pragma once

// Box and grid geometry shared by the encoders, heads, tracker and metrics:
// feature-grid to image remapping, Gaussian target labels, dense ltrb
// encode/decode, IoU/GIoU and square search-region crops.

#include "tomp/core/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

enum class Frame { image, patch };

/// Axis-aligned box; (x, y) is the top-left corner in continuous pixel
/// coordinates where pixel i covers [i, i + 1).
struct BoxXYWH {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  Frame frame = Frame::image;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0.0 && h > 0.0;
  }
};

inline void require_valid(const BoxXYWH& b, const char* what) {
  if (!b.valid()) throw std::invalid_argument(std::string(what) + ": degenerate or non-finite box");
}

/// Spatial layout of a flattened row-major map: cell (jx, jy) is row jy*width + jx.
struct GridShape {
  int height = 0;
  int width = 0;
  int stride = 16;

  Index cells() const { return static_cast<Index>(height) * width; }
  double patch_width() const { return static_cast<double>(stride) * width; }
  double patch_height() const { return static_cast<double>(stride) * height; }
  bool operator==(const GridShape&) const = default;
};

struct GridPoint {
  double x = 0.0, y = 0.0;
};

/// Image-domain coordinate of feature cell (jx, jy): floor(s/2) + s*j.
inline GridPoint remap_cell(int jx, int jy, int stride) {
  const double half = static_cast<double>(stride / 2);
  return {half + static_cast<double>(stride) * jx, half + static_cast<double>(stride) * jy};
}

inline std::vector<GridPoint> remap_grid(const GridShape& g) {
  if (g.height < 1 || g.width < 1 || g.stride < 1) throw std::invalid_argument("remap_grid: bad grid shape");
  std::vector<GridPoint> out;
  out.reserve(static_cast<std::size_t>(g.cells()));
  for (int jy = 0; jy < g.height; ++jy)
    for (int jx = 0; jx < g.width; ++jx) out.push_back(remap_cell(jx, jy, g.stride));
  return out;
}

struct ScoreMap {
  Mat values;  // cells x 1
  GridShape shape;
};

struct GaussianLabel {
  Mat values;  // cells x 1, in (0, 1]
  GridShape shape;
  Index peak = 0;
};

/// Per-cell normalized distances (l, t, r, b) to the box sides, measured so
/// that every component is nonnegative for cells inside the box.
struct DenseLTRB {
  Mat values;  // cells x 4
  GridShape shape;
};

/// Gaussian of std sigma_ratio * sqrt(w*h) centered on the box, sampled on
/// the remapped grid.
inline GaussianLabel gaussian_label(const BoxXYWH& box, const GridShape& g, double sigma_ratio = 0.25) {
  require_valid(box, "gaussian_label");
  if (!(sigma_ratio > 0.0)) throw std::invalid_argument("gaussian_label: sigma_ratio must be positive");
  const double sigma = sigma_ratio * std::sqrt(box.w * box.h);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  GaussianLabel out{Mat(g.cells(), 1), g, 0};
  const auto grid = remap_grid(g);
  for (Index i = 0; i < g.cells(); ++i) {
    const double dx = grid[i].x - box.cx();
    const double dy = grid[i].y - box.cy();
    out.values(i, 0) = std::exp(-(dx * dx + dy * dy) * inv);
  }
  out.values.col(0).maxCoeff(&out.peak);
  return out;
}

inline DenseLTRB encode_ltrb(const BoxXYWH& box, const GridShape& g) {
  require_valid(box, "encode_ltrb");
  const double wim = g.patch_width();
  const double him = g.patch_height();
  DenseLTRB out{Mat(g.cells(), 4), g};
  const auto grid = remap_grid(g);
  for (Index i = 0; i < g.cells(); ++i) {
    const auto k = grid[i];
    out.values(i, 0) = (k.x - box.x) / wim;
    out.values(i, 1) = (k.y - box.y) / him;
    out.values(i, 2) = (box.x + box.w - k.x) / wim;
    out.values(i, 3) = (box.y + box.h - k.y) / him;
  }
  return out;
}

/// Box implied by the ltrb vector at one cell. Empty when the implied
/// width or height is not positive.
inline std::optional<BoxXYWH> decode_ltrb(const DenseLTRB& d, Index cell) {
  const GridShape& g = d.shape;
  if (cell < 0 || cell >= g.cells() || d.values.rows() != g.cells() || d.values.cols() != 4)
    throw std::out_of_range("decode_ltrb: cell out of range");
  const auto k = remap_cell(static_cast<int>(cell % g.width), static_cast<int>(cell / g.width), g.stride);
  const double wim = g.patch_width();
  const double him = g.patch_height();
  const double l = d.values(cell, 0), t = d.values(cell, 1), r = d.values(cell, 2), b = d.values(cell, 3);
  BoxXYWH box{k.x - l * wim, k.y - t * him, (l + r) * wim, (t + b) * him, Frame::patch};
  if (!box.valid()) return std::nullopt;
  return box;
}

inline double intersection_area(const BoxXYWH& a, const BoxXYWH& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  return std::max(iw, 0.0) * std::max(ih, 0.0);
}

inline void require_same_frame(const BoxXYWH& a, const BoxXYWH& b) {
  if (a.frame != b.frame) throw std::invalid_argument("box overlap: boxes live in different frames");
}

inline double iou(const BoxXYWH& a, const BoxXYWH& b) {
  require_same_frame(a, b);
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double giou(const BoxXYWH& a, const BoxXYWH& b) {
  require_same_frame(a, b);
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double hull = (std::max(a.x + a.w, b.x + b.w) - std::min(a.x, b.x)) *
                      (std::max(a.y + a.h, b.y + b.h) - std::min(a.y, b.y));
  const double io = uni > 0.0 ? inter / uni : 0.0;
  return hull > 0.0 ? io - (hull - uni) / hull : io;
}

/// Affine map between an image and a square search patch:
/// patch = (image - origin) * scale.
struct CropTransform {
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  int out_px = 0;

  double side() const { return out_px / scale; }

  GridPoint to_patch(GridPoint p) const { return {(p.x - offset_x) * scale, (p.y - offset_y) * scale}; }
  GridPoint to_image(GridPoint p) const { return {p.x / scale + offset_x, p.y / scale + offset_y}; }

  BoxXYWH to_patch(const BoxXYWH& b) const {
    if (b.frame != Frame::image) throw std::invalid_argument("CropTransform::to_patch expects an image-frame box");
    return {(b.x - offset_x) * scale, (b.y - offset_y) * scale, b.w * scale, b.h * scale, Frame::patch};
  }
  BoxXYWH to_image(const BoxXYWH& b) const {
    if (b.frame != Frame::patch) throw std::invalid_argument("CropTransform::to_image expects a patch-frame box");
    return {b.x / scale + offset_x, b.y / scale + offset_y, b.w / scale, b.h / scale, Frame::image};
  }

  /// True when part of the crop square falls outside a width x height image.
  bool needs_padding(int width, int height) const {
    return offset_x < 0.0 || offset_y < 0.0 || offset_x + side() > width || offset_y + side() > height;
  }
};

/// Square region of side factor*sqrt(w*h) centered on the target, resampled
/// to out_px x out_px.
inline CropTransform make_crop(const BoxXYWH& target, double factor, int out_px) {
  require_valid(target, "make_crop");
  if (!(factor > 0.0) || out_px < 1) throw std::invalid_argument("make_crop: bad factor or output size");
  const double side = factor * std::sqrt(target.w * target.h);
  CropTransform t;
  t.scale = out_px / side;
  t.offset_x = target.cx() - 0.5 * side;
  t.offset_y = target.cy() - 0.5 * side;
  t.out_px = out_px;
  return t;
}

/// Row-major out_px x out_px mask; 1 marks patch pixels whose center maps
/// outside a width x height image and is therefore filled by padding.
inline std::vector<unsigned char> padding_mask(const CropTransform& t, int width, int height) {
  std::vector<unsigned char> mask(static_cast<std::size_t>(t.out_px) * t.out_px, 0);
  for (int v = 0; v < t.out_px; ++v) {
    for (int u = 0; u < t.out_px; ++u) {
      const auto p = t.to_image(GridPoint{u + 0.5, v + 0.5});
      if (p.x < 0.0 || p.x >= width || p.y < 0.0 || p.y >= height)
        mask[static_cast<std::size_t>(v) * t.out_px + u] = 1;
    }
  }
  return mask;
}

/// Smallest row-major index attaining the maximum.
inline Index argmax_cell(const Mat& column) {
  Index best = 0;
  for (Index i = 1; i < column.rows(); ++i)
    if (column(i, 0) > column(best, 0)) best = i;
  return best;
}

}  // namespace tomp
