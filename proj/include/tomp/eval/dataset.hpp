#pragma once

// On-disk sequence layout:
//
//   <root>/<name>/img/00000001.png ...
//   <root>/<name>/groundtruth.txt      one "x,y,w,h" line per frame
//
// Results files are "<results>/<name>.txt" with the same line format.

#include "tomp/geometry.hpp"
#include "tomp/trainlab/synthetic.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

namespace fs = std::filesystem;

struct SequenceData {
  std::string name;
  std::vector<std::string> frames;  // image paths in order
  std::vector<BoxXYWH> groundtruth;
};

/// Parses "x,y,w,h" lines (commas, tabs or spaces). Blank lines are skipped.
inline std::vector<BoxXYWH> parse_boxes(std::istream& in, const std::string& origin) {
  std::vector<BoxXYWH> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    std::istringstream ss(line);
    double v[4];
    int n = 0;
    while (n < 4 && ss >> v[n]) ++n;
    if (n == 0 && line.find_first_not_of(" \r") == std::string::npos) continue;
    std::string rest;
    if (n != 4 || (ss >> rest))
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected x,y,w,h");
    out.push_back({v[0], v[1], v[2], v[3], Frame::image});
  }
  return out;
}

inline std::vector<BoxXYWH> read_boxes(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return parse_boxes(f, path);
}

inline std::string format_box_line(const BoxXYWH& b) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f", b.x, b.y, b.w, b.h);
  return buf;
}

inline void write_boxes(const std::string& path, const std::vector<BoxXYWH>& boxes) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& b : boxes) f << format_box_line(b) << '\n';
}

/// Sorted names of the subdirectories that hold a groundtruth.txt.
inline std::vector<std::string> list_sequences(const std::string& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset directory not found: " + root);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "groundtruth.txt")) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

inline SequenceData load_sequence(const std::string& root, const std::string& name) {
  const fs::path dir = fs::path(root) / name;
  SequenceData s;
  s.name = name;
  s.groundtruth = read_boxes((dir / "groundtruth.txt").string());
  const fs::path img = fs::is_directory(dir / "img") ? dir / "img" : dir;
  for (const auto& e : fs::directory_iterator(img)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) s.frames.push_back(e.path().string());
  }
  std::sort(s.frames.begin(), s.frames.end());
  if (s.frames.size() != s.groundtruth.size())
    throw std::invalid_argument(name + ": " + std::to_string(s.frames.size()) + " frames but " +
                                std::to_string(s.groundtruth.size()) + " ground-truth lines");
  for (std::size_t i = 0; i < s.groundtruth.size(); ++i)
    if (!s.groundtruth[i].valid())
      throw std::invalid_argument(name + ": invalid ground-truth box on line " + std::to_string(i + 1));
  return s;
}

/// Reads frames lazily from disk.
class DiskSequence : public FrameSource {
 public:
  explicit DiskSequence(SequenceData data) : data_(std::move(data)) {}
  int length() const override { return static_cast<int>(data_.frames.size()); }
  BoxXYWH box(int i) const override { return data_.groundtruth.at(static_cast<std::size_t>(i)); }
  cv::Mat frame(int i) const override {
    const auto& path = data_.frames.at(static_cast<std::size_t>(i));
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw std::runtime_error("cannot read image " + path);
    return img;
  }
  const SequenceData& data() const { return data_; }

 private:
  SequenceData data_;
};

/// Renders a sequence into the on-disk layout.
inline void write_sequence(const std::string& root, const std::string& name, const FrameSource& src) {
  const fs::path dir = fs::path(root) / name;
  fs::create_directories(dir / "img");
  std::vector<BoxXYWH> gt;
  char file[32];
  for (int t = 0; t < src.length(); ++t) {
    std::snprintf(file, sizeof(file), "%08d.png", t + 1);
    if (!cv::imwrite((dir / "img" / file).string(), src.frame(t)))
      throw std::runtime_error("cannot write frame " + (dir / "img" / file).string());
    gt.push_back(src.box(t));
  }
  write_boxes((dir / "groundtruth.txt").string(), gt);
}

}  // namespace tomp
