#pragma once

// Image-side plumbing: resampling search patches and converting them into
// backbone input matrices.

#include "tomp/core/autograd.hpp"
#include "tomp/geometry.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include <stdexcept>

namespace tomp {

/// Resamples the crop square to out_px x out_px; area outside the image
/// replicates the nearest edge pixel.
inline cv::Mat extract_patch(const cv::Mat& image, const CropTransform& crop) {
  if (image.empty() || image.type() != CV_8UC3) throw std::invalid_argument("extract_patch: expects a non-empty 8-bit BGR image");
  // Pixel centers sit at integer coordinates in OpenCV and at i + 0.5 in ours.
  const double s = crop.scale;
  cv::Matx23d m(s, 0.0, (0.5 - crop.offset_x) * s - 0.5, 0.0, s, (0.5 - crop.offset_y) * s - 0.5);
  cv::Mat patch;
  cv::warpAffine(image, patch, m, cv::Size(crop.out_px, crop.out_px), cv::INTER_LINEAR, cv::BORDER_REPLICATE);
  return patch;
}

/// (px*px) x 3 matrix of pixels mapped to [-1, 1].
inline Mat patch_to_input(const cv::Mat& patch) {
  if (patch.type() != CV_8UC3 || patch.rows != patch.cols) throw std::invalid_argument("patch_to_input: expects a square BGR patch");
  Mat out(static_cast<Index>(patch.rows) * patch.cols, 3);
  for (int r = 0; r < patch.rows; ++r) {
    const auto* row = patch.ptr<cv::Vec3b>(r);
    for (int c = 0; c < patch.cols; ++c) {
      const Index i = static_cast<Index>(r) * patch.cols + c;
      for (int k = 0; k < 3; ++k) out(i, k) = row[c][k] / 127.5 - 1.0;
    }
  }
  return out;
}

}  // namespace tomp
