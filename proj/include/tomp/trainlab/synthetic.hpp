#pragma once

// Seeded synthetic tracking sequences: a striped target shape moving over a
// smooth noise background, optional look-alike distractors and occluders.
// Frames are rendered on demand so long sequences cost little memory.

#include "tomp/core/random.hpp"
#include "tomp/geometry.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

namespace tomp {

/// Anything that yields frames with a ground-truth box per frame.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual int length() const = 0;
  virtual cv::Mat frame(int index) const = 0;
  virtual BoxXYWH box(int index) const = 0;
};

struct OcclusionWindow {
  int begin = 0;  // inclusive
  int end = 0;    // exclusive
};

struct SyntheticSequenceSpec {
  std::uint64_t seed = 0;
  int length = 100;
  int canvas_width = 256;
  int canvas_height = 192;
  double min_size = 22.0;  // sqrt(w*h) bounds of the target
  double max_size = 40.0;
  double min_aspect = 0.6;
  double max_aspect = 1.6;
  double min_speed = 1.0;  // px per frame
  double max_speed = 4.0;
  int distractors = 1;
  std::vector<OcclusionWindow> occlusions;
  int margin = 8;
};

enum class ShapeKind { ellipse, rectangle };

struct ObjectTrack {
  ShapeKind shape = ShapeKind::ellipse;
  cv::Vec3b color_a, color_b;
  double stripe_period = 0.25;  // in object-relative units
  double stripe_angle = 0.0;
  std::vector<BoxXYWH> boxes;
};

namespace detail {

inline cv::Vec3b random_color(Rng& rng) {
  return {static_cast<unsigned char>(uniform_int(rng, 20, 235)), static_cast<unsigned char>(uniform_int(rng, 20, 235)),
          static_cast<unsigned char>(uniform_int(rng, 20, 235))};
}

inline cv::Mat value_noise(int width, int height, int cells_x, int cells_y, double amplitude, Rng& rng) {
  cv::Mat coarse(cells_y, cells_x, CV_32FC3);
  for (int r = 0; r < cells_y; ++r)
    for (int c = 0; c < cells_x; ++c)
      coarse.at<cv::Vec3f>(r, c) = cv::Vec3f(static_cast<float>(uniform(rng, -amplitude, amplitude)),
                                             static_cast<float>(uniform(rng, -amplitude, amplitude)),
                                             static_cast<float>(uniform(rng, -amplitude, amplitude)));
  cv::Mat fine;
  cv::resize(coarse, fine, cv::Size(width, height), 0, 0, cv::INTER_CUBIC);
  return fine;
}

// Bouncing trajectory with slowly drifting velocity and breathing size.
inline std::vector<BoxXYWH> make_trajectory(const SyntheticSequenceSpec& s, Rng& rng, double size_scale) {
  const double base = uniform(rng, s.min_size, s.max_size) * size_scale;
  const double aspect = std::exp(uniform(rng, std::log(s.min_aspect), std::log(s.max_aspect)));
  const double base_w = base * std::sqrt(aspect);
  const double base_h = base / std::sqrt(aspect);
  const double amp = uniform(rng, 0.0, 0.15);
  const double period = uniform(rng, 40.0, 120.0);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double max_w = base_w * (1.0 + amp), max_h = base_h * (1.0 + amp);
  if (max_w + 2.0 * s.margin >= s.canvas_width || max_h + 2.0 * s.margin >= s.canvas_height)
    throw std::invalid_argument("synthetic sequence: target does not fit inside the canvas margins");

  double cx = uniform(rng, s.margin + 0.5 * max_w, s.canvas_width - s.margin - 0.5 * max_w);
  double cy = uniform(rng, s.margin + 0.5 * max_h, s.canvas_height - s.margin - 0.5 * max_h);
  const double speed = uniform(rng, s.min_speed, s.max_speed);
  double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::vector<BoxXYWH> boxes;
  boxes.reserve(static_cast<std::size_t>(s.length));
  for (int t = 0; t < s.length; ++t) {
    const double k = 1.0 + amp * std::sin(2.0 * std::numbers::pi * t / period + phase);
    const double w = base_w * k, h = base_h * k;
    boxes.push_back({cx - 0.5 * w, cy - 0.5 * h, w, h, Frame::image});
    heading += normal(rng, 0.0, 0.08);
    cx += speed * std::cos(heading);
    cy += speed * std::sin(heading);
    const double lo_x = s.margin + 0.5 * max_w, hi_x = s.canvas_width - s.margin - 0.5 * max_w;
    const double lo_y = s.margin + 0.5 * max_h, hi_y = s.canvas_height - s.margin - 0.5 * max_h;
    if (cx < lo_x || cx > hi_x) {
      heading = std::numbers::pi - heading;
      cx = std::clamp(cx, lo_x, hi_x);
    }
    if (cy < lo_y || cy > hi_y) {
      heading = -heading;
      cy = std::clamp(cy, lo_y, hi_y);
    }
  }
  return boxes;
}

inline void draw_object(cv::Mat& img, const ObjectTrack& obj, const BoxXYWH& b) {
  const int x0 = std::max(0, static_cast<int>(std::floor(b.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.y)));
  const int x1 = std::min(img.cols, static_cast<int>(std::ceil(b.x + b.w)));
  const int y1 = std::min(img.rows, static_cast<int>(std::ceil(b.y + b.h)));
  const double ca = std::cos(obj.stripe_angle), sa = std::sin(obj.stripe_angle);
  for (int py = y0; py < y1; ++py) {
    auto* row = img.ptr<cv::Vec3b>(py);
    for (int px = x0; px < x1; ++px) {
      const double u = (px + 0.5 - b.x) / b.w;  // [0, 1] inside the box
      const double v = (py + 0.5 - b.y) / b.h;
      if (u < 0.0 || u >= 1.0 || v < 0.0 || v >= 1.0) continue;
      if (obj.shape == ShapeKind::ellipse) {
        const double du = u - 0.5, dv = v - 0.5;
        if (du * du + dv * dv > 0.25) continue;
      }
      const double t = (u * ca + v * sa) / obj.stripe_period;
      row[px] = (static_cast<long>(std::floor(t)) % 2 == 0) ? obj.color_a : obj.color_b;
    }
  }
}

}  // namespace detail

class SyntheticSequence : public FrameSource {
 public:
  explicit SyntheticSequence(SyntheticSequenceSpec spec) : spec_(std::move(spec)) {
    if (spec_.length < 1) throw std::invalid_argument("synthetic sequence: length must be positive");
    if (spec_.min_size <= 0.0 || spec_.max_size < spec_.min_size) throw std::invalid_argument("synthetic sequence: bad size range");
    if (spec_.distractors < 0) throw std::invalid_argument("synthetic sequence: negative distractor count");
    for (const auto& o : spec_.occlusions)
      if (o.begin < 0 || o.end < o.begin) throw std::invalid_argument("synthetic sequence: bad occlusion window");
    Rng rng(derive_seed(spec_.seed, "synthetic-sequence"));

    const cv::Vec3b base = detail::random_color(rng);
    cv::Mat bg(spec_.canvas_height, spec_.canvas_width, CV_32FC3, cv::Scalar(base[0], base[1], base[2]));
    bg += detail::value_noise(spec_.canvas_width, spec_.canvas_height, 6, 5, 70.0, rng);
    bg += detail::value_noise(spec_.canvas_width, spec_.canvas_height, 40, 30, 25.0, rng);
    bg.convertTo(background_, CV_8UC3);

    target_.shape = uniform(rng) < 0.5 ? ShapeKind::ellipse : ShapeKind::rectangle;
    target_.color_a = detail::random_color(rng);
    target_.color_b = detail::random_color(rng);
    target_.stripe_period = uniform(rng, 0.18, 0.4);
    target_.stripe_angle = uniform(rng, 0.0, std::numbers::pi);
    target_.boxes = detail::make_trajectory(spec_, rng, 1.0);

    for (int d = 0; d < spec_.distractors; ++d) {
      ObjectTrack o;
      o.shape = target_.shape;
      // Look-alike: same shape family, one shared stripe color.
      o.color_a = target_.color_a;
      o.color_b = detail::random_color(rng);
      o.stripe_period = uniform(rng, 0.18, 0.4);
      o.stripe_angle = uniform(rng, 0.0, std::numbers::pi);
      o.boxes = detail::make_trajectory(spec_, rng, uniform(rng, 0.8, 1.1));
      distractors_.push_back(std::move(o));
    }
    occluder_color_ = detail::random_color(rng);
  }

  int length() const override { return spec_.length; }
  const SyntheticSequenceSpec& spec() const { return spec_; }

  BoxXYWH box(int t) const override { return target_.boxes.at(static_cast<std::size_t>(t)); }

  bool occluded(int t) const {
    for (const auto& o : spec_.occlusions)
      if (t >= o.begin && t < o.end) return true;
    return false;
  }

  cv::Mat frame(int t) const override {
    if (t < 0 || t >= spec_.length) throw std::out_of_range("synthetic sequence: frame index out of range");
    cv::Mat img = background_.clone();
    for (const auto& d : distractors_) detail::draw_object(img, d, d.boxes[static_cast<std::size_t>(t)]);
    const BoxXYWH b = box(t);
    detail::draw_object(img, target_, b);
    if (occluded(t)) {
      const cv::Rect r(static_cast<int>(b.x - 0.2 * b.w), static_cast<int>(b.y - 0.2 * b.h), static_cast<int>(1.4 * b.w),
                       static_cast<int>(1.4 * b.h));
      cv::rectangle(img, r & cv::Rect(0, 0, img.cols, img.rows), cv::Scalar(occluder_color_[0], occluder_color_[1], occluder_color_[2]),
                    cv::FILLED);
    }
    return img;
  }

 private:
  SyntheticSequenceSpec spec_;
  cv::Mat background_;
  ObjectTrack target_;
  std::vector<ObjectTrack> distractors_;
  cv::Vec3b occluder_color_;
};

/// Spec for the i-th sequence of a seeded collection; roughly a quarter of
/// the sequences get one occlusion window.
inline SyntheticSequenceSpec collection_spec(std::uint64_t seed, std::string_view salt, int index, int length,
                                             int distractors, double occlusion_rate = 0.25) {
  SyntheticSequenceSpec s;
  s.seed = derive_seed(seed, salt, static_cast<std::uint64_t>(index));
  s.length = length;
  s.distractors = distractors;
  Rng rng(derive_seed(s.seed, "collection-extras"));
  if (length >= 20 && uniform(rng) < occlusion_rate) {
    const int dur = uniform_int(rng, 3, std::max(3, length / 12));
    const int begin = uniform_int(rng, length / 4, length - dur - 1);
    s.occlusions.push_back({begin, begin + dur});
  }
  return s;
}

}  // namespace tomp
