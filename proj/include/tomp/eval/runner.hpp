#pragma once

// Dataset-level tracking runs. Sequences are split across worker lanes that
// share the read-only model; each lane writes only its own result files.

#include "tomp/eval/dataset.hpp"
#include "tomp/tracker.hpp"
#include "tomp/trainlab/synthetic.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tomp {

/// One-pass run: frame 1 reports the given initial box.
inline std::vector<BoxXYWH> track_sequence(const Tracker& tracker, const FrameSource& src) {
  std::vector<BoxXYWH> out;
  out.reserve(static_cast<std::size_t>(src.length()));
  auto state = tracker.init(src.frame(0), src.box(0));
  out.push_back(src.box(0));
  for (int t = 1; t < src.length(); ++t) out.push_back(tracker.track(state, src.frame(t)).box);
  return out;
}

/// Keep-initial-box baseline.
inline std::vector<BoxXYWH> keep_initial(const FrameSource& src) {
  return std::vector<BoxXYWH>(static_cast<std::size_t>(src.length()), src.box(0));
}

/// Runs fn(index) for index in [0, count) on up to `jobs` threads. The first
/// exception is rethrown after all lanes stop.
template <typename Fn>
void parallel_for(int count, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min(jobs, count));
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto lane = [&] {
    for (int i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  if (jobs == 1) {
    lane();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(lane);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
}

/// Tracks every sequence in the dataset and writes <out_dir>/<name>.txt.
inline std::vector<std::string> track_dataset(const ToMPModel& model, const TrackerConfig& cfg, const std::string& dataset_dir,
                                              const std::string& out_dir, int jobs = 1) {
  const auto names = list_sequences(dataset_dir);
  fs::create_directories(out_dir);
  const Tracker tracker(model, cfg);
  parallel_for(static_cast<int>(names.size()), jobs, [&](int i) {
    const DiskSequence seq(load_sequence(dataset_dir, names[static_cast<std::size_t>(i)]));
    write_boxes((fs::path(out_dir) / (names[static_cast<std::size_t>(i)] + ".txt")).string(), track_sequence(tracker, seq));
  });
  return names;
}

inline void write_keep_initial_results(const std::string& dataset_dir, const std::string& out_dir) {
  fs::create_directories(out_dir);
  for (const auto& n : list_sequences(dataset_dir)) {
    const auto gt = read_boxes((fs::path(dataset_dir) / n / "groundtruth.txt").string());
    write_boxes((fs::path(out_dir) / (n + ".txt")).string(), std::vector<BoxXYWH>(gt.size(), gt.front()));
  }
}

struct SynthDatasetSpec {
  std::uint64_t seed = 7;
  int count = 20;
  int length = 100;
  int distractors = 1;
  double occlusion_rate = 0.25;
};

inline std::string synth_sequence_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq%03d", i);
  return buf;
}

/// Held-out collections use their own salt, so they never coincide with training sequences.
inline void write_synthetic_dataset(const std::string& root, const SynthDatasetSpec& s, int jobs = 1) {
  if (s.count < 1 || s.length < 1) throw std::invalid_argument("synth: count and length must be positive");
  fs::create_directories(root);
  parallel_for(s.count, jobs, [&](int i) {
    const SyntheticSequence seq(collection_spec(s.seed, "eval-sequence", i, s.length, s.distractors, s.occlusion_rate));
    write_sequence(root, synth_sequence_name(i), seq);
  });
}

}  // namespace tomp
