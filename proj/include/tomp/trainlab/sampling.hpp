#pragma once

// Training sub-sequence sampling: two training frames and one test frame
// from a window of one sequence, cropped around jittered boxes with joint
// flip and color augmentation.

#include "tomp/core/random.hpp"
#include "tomp/geometry.hpp"
#include "tomp/imaging.hpp"
#include "tomp/trainlab/synthetic.hpp"

#include <opencv2/core.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tomp {

struct JitterConfig {
  double center = 0.0;  // max offset as a fraction of the jittered target size
  double scale = 0.0;   // std of the log size factor
};

struct AugmentConfig {
  bool enabled = true;
  JitterConfig train{0.2, 0.05};
  JitterConfig test{1.5, 0.15};
  double flip_probability = 0.5;
  double color_jitter = 0.2;  // per-channel gain in [1 - c, 1 + c]
};

struct TrainingTriplet {
  std::array<int, 3> indices{};  // two training frames, then the test frame
  std::array<cv::Mat, 3> patches;
  std::array<BoxXYWH, 3> boxes;  // ground truth in patch coordinates
  bool flipped = false;
};

/// Three distinct sorted indices inside one window; the last is the test frame.
inline std::array<int, 3> sample_indices(int length, int window, Rng& rng) {
  if (length < 3) throw std::invalid_argument("sample_triplet: sequence needs at least 3 frames");
  if (window < 3) throw std::invalid_argument("sample_triplet: window must hold at least 3 frames");
  const int w = std::min(window, length);
  const int start = uniform_int(rng, 0, length - w);
  std::array<int, 3> idx{};
  int n = 0;
  while (n < 3) {
    const int c = start + uniform_int(rng, 0, w - 1);
    if (std::find(idx.begin(), idx.begin() + n, c) == idx.begin() + n) idx[static_cast<std::size_t>(n++)] = c;
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline BoxXYWH jitter_box(const BoxXYWH& b, const JitterConfig& j, Rng& rng) {
  const double w = b.w * std::exp(normal(rng, 0.0, j.scale));
  const double h = b.h * std::exp(normal(rng, 0.0, j.scale));
  const double max_offset = std::sqrt(w * h) * j.center;
  const double cx = b.cx() + max_offset * (uniform(rng) - 0.5);
  const double cy = b.cy() + max_offset * (uniform(rng) - 0.5);
  return {cx - 0.5 * w, cy - 0.5 * h, w, h, Frame::image};
}

inline TrainingTriplet sample_triplet(const FrameSource& seq, int window, Rng& rng, const AugmentConfig& aug,
                                      double search_factor, int patch_px) {
  TrainingTriplet t;
  t.indices = sample_indices(seq.length(), window, rng);
  t.flipped = aug.enabled && uniform(rng) < aug.flip_probability;
  cv::Scalar gain(1.0, 1.0, 1.0);
  if (aug.enabled) {
    for (int c = 0; c < 3; ++c) gain[c] = uniform(rng, 1.0 - aug.color_jitter, 1.0 + aug.color_jitter);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const BoxXYWH gt = seq.box(t.indices[k]);
    const BoxXYWH center = aug.enabled ? jitter_box(gt, k < 2 ? aug.train : aug.test, rng) : gt;
    const auto crop = make_crop(center, search_factor, patch_px);
    cv::Mat patch = extract_patch(seq.frame(t.indices[k]), crop);
    BoxXYWH box = crop.to_patch(gt);
    if (t.flipped) {
      cv::flip(patch, patch, 1);
      box.x = patch_px - box.x - box.w;
    }
    if (aug.enabled) cv::multiply(patch, gain, patch);
    t.patches[k] = patch;
    t.boxes[k] = box;
  }
  return t;
}

}  // namespace tomp
