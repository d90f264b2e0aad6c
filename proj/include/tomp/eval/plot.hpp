#pragma once

// Raster curve plots (PNG) for one or more evaluation reports.

#include "tomp/eval/report.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace tomp {

enum class PlotMetric { success, precision, norm_precision };

inline const char* plot_file_name(PlotMetric m) {
  switch (m) {
    case PlotMetric::success: return "success.png";
    case PlotMetric::precision: return "precision.png";
    default: return "norm_precision.png";
  }
}

inline cv::Mat render_plot(const std::vector<MetricReport>& reports, PlotMetric metric) {
  const int W = 640, H = 480, left = 60, right = 20, top = 40, bottom = 50;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = W - left - right, ph = H - top - bottom;
  const char* title = metric == PlotMetric::success ? "Success plot" : metric == PlotMetric::precision ? "Precision plot"
                                                                                                       : "Normalized precision plot";
  const char* xlabel = metric == PlotMetric::success ? "Overlap threshold" : metric == PlotMetric::precision ? "Location error threshold (px)"
                                                                                                              : "Normalized distance threshold";
  cv::putText(img, title, {left, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.6, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  cv::putText(img, xlabel, {left + pw / 2 - 100, H - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  for (int i = 0; i <= 10; ++i) {
    const int y = top + ph - ph * i / 10, x = left + pw * i / 10;
    cv::line(img, {left, y}, {left + pw, y}, cv::Scalar(225, 225, 225));
    cv::line(img, {x, top}, {x, top + ph}, cv::Scalar(225, 225, 225));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", i / 10.0);
    cv::putText(img, buf, {left - 32, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, cv::Scalar(0, 0, 0));

  static const cv::Scalar palette[] = {{200, 60, 30}, {30, 30, 200}, {40, 150, 40}, {150, 40, 150}, {20, 140, 200}, {90, 90, 90}};
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& a = reports[r].aggregate;
    const Curve& c = metric == PlotMetric::success ? a.success : metric == PlotMetric::precision ? a.precision_curve : a.norm_precision;
    if (c.values.empty()) continue;
    const double x_max = c.thresholds.back() > 0.0 ? c.thresholds.back() : 1.0;
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < c.values.size(); ++i)
      pts.emplace_back(left + static_cast<int>(pw * c.thresholds[i] / x_max), top + ph - static_cast<int>(ph * c.values[i]));
    const auto& color = palette[r % std::size(palette)];
    cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    const double score = metric == PlotMetric::success ? a.success_auc : metric == PlotMetric::precision ? a.precision : a.norm_precision_auc;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s [%.3f]", reports[r].label.empty() ? "run" : reports[r].label.c_str(), score);
    const int ly = metric == PlotMetric::success ? top + 20 + 18 * static_cast<int>(r) : top + ph - 15 - 18 * static_cast<int>(reports.size() - 1 - r);
    const int lx = metric == PlotMetric::success ? left + pw - 200 : left + pw - 200;
    cv::line(img, {lx, ly - 4}, {lx + 20, ly - 4}, color, 2);
    cv::putText(img, buf, {lx + 26, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  return img;
}

/// Writes success.png, precision.png and norm_precision.png; returns their paths.
inline std::vector<std::string> write_plots(const std::vector<MetricReport>& reports, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  for (auto m : {PlotMetric::success, PlotMetric::precision, PlotMetric::norm_precision}) {
    const auto path = (fs::path(out_dir) / plot_file_name(m)).string();
    if (!cv::imwrite(path, render_plot(reports, m))) throw std::runtime_error("cannot write plot " + path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace tomp
