#pragma once

// Command-line surface: synth, train, track, eval, plot.

#include "tomp/eval/plot.hpp"
#include "tomp/eval/report.hpp"
#include "tomp/eval/runner.hpp"
#include "tomp/trainlab/train.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace tomp {

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Transformer model-prediction tracker: synthetic data, training, tracking and evaluation", "tomp"};
  app.require_subcommand(1);

  // synth
  SynthDatasetSpec synth;
  std::string synth_out;
  int synth_jobs = 1;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic sequence dataset");
  c_synth->add_option("--out", synth_out, "Output dataset directory")->required();
  c_synth->add_option("--count", synth.count, "Number of sequences")->capture_default_str();
  c_synth->add_option("--length", synth.length, "Frames per sequence")->capture_default_str();
  c_synth->add_option("--distractors", synth.distractors, "Look-alike distractors per sequence")->capture_default_str();
  c_synth->add_option("--occlusion-rate", synth.occlusion_rate, "Fraction of sequences with an occlusion window")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Collection seed")->capture_default_str();
  c_synth->add_option("--jobs", synth_jobs, "Worker threads")->capture_default_str();

  // train
  std::string train_config, train_resume, train_checkpoint, train_trace;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_steps;
  int train_log_every = 50;
  auto* c_train = app.add_subcommand("train", "Train a model from a config file");
  c_train->add_option("config", train_config, "Config file (key = value)")->required();
  c_train->add_option("--seed", train_seed, "Override train.seed");
  c_train->add_option("--steps", train_steps, "Override train.steps");
  c_train->add_option("--checkpoint", train_checkpoint, "Override output.checkpoint");
  c_train->add_option("--trace", train_trace, "Override output.trace");
  c_train->add_option("--resume", train_resume, "Continue from a training checkpoint");
  c_train->add_option("--log-every", train_log_every, "Progress line interval (0 = silent)")->capture_default_str();

  // track
  std::string track_ckpt, track_data, track_out, track_predictor = "transformer";
  TrackerConfig tcfg;
  bool no_two_stage = false;
  int track_jobs = 1;
  std::uint64_t track_seed = 0;
  auto* c_track = app.add_subcommand("track", "Run the tracker over every sequence of a dataset");
  c_track->add_option("--checkpoint", track_ckpt, "Model checkpoint")->required();
  c_track->add_option("--dataset", track_data, "Dataset directory")->required();
  c_track->add_option("--out", track_out, "Results directory")->required();
  c_track->add_option("--predictor", track_predictor, "transformer or dcf")->check(CLI::IsMember({"transformer", "dcf"}))->capture_default_str();
  c_track->add_flag("--no-two-stage", no_two_stage, "Single predictor pass over the whole memory");
  c_track->add_option("--memory", tcfg.memory_capacity, "Memory capacity (initial frame included)")->capture_default_str();
  c_track->add_option("--eta", tcfg.eta, "Confidence needed to store a frame")->capture_default_str();
  c_track->add_option("--dcf-iters", tcfg.dcf_iters, "Optimizer iterations for the dcf predictor")->capture_default_str();
  c_track->add_option("--jobs", track_jobs, "Worker threads")->capture_default_str();
  c_track->add_option("--seed", track_seed, "Accepted for uniformity; tracking uses no randomness");

  // eval
  std::string eval_data, eval_results, eval_out, eval_label;
  std::uint64_t eval_seed = 0;
  auto* c_eval = app.add_subcommand("eval", "Score results against ground truth");
  c_eval->add_option("--dataset", eval_data, "Dataset directory")->required();
  c_eval->add_option("--results", eval_results, "Results directory")->required();
  c_eval->add_option("--out", eval_out, "Report directory (report.json, report.csv)")->required();
  c_eval->add_option("--label", eval_label, "Run label shown in plots");
  c_eval->add_option("--seed", eval_seed, "Accepted for uniformity; evaluation uses no randomness");

  // plot
  std::vector<std::string> plot_reports;
  std::string plot_out;
  std::uint64_t plot_seed = 0;
  auto* c_plot = app.add_subcommand("plot", "Draw success / precision / normalized precision curves");
  c_plot->add_option("--report", plot_reports, "report.json (repeatable)")->required();
  c_plot->add_option("--out", plot_out, "Output directory")->required();
  c_plot->add_option("--seed", plot_seed, "Accepted for uniformity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  try {
    if (*c_synth) {
      write_synthetic_dataset(synth_out, synth, synth_jobs);
      out << "wrote " << synth.count << " sequences to " << synth_out << "\n";
    } else if (*c_train) {
      auto kv = KeyValues::load(train_config);
      auto cfg = train_config_from(kv);
      if (train_seed) cfg.seed = *train_seed;
      if (train_steps) cfg.steps = *train_steps;
      if (!train_checkpoint.empty()) cfg.checkpoint_path = train_checkpoint;
      if (!train_trace.empty()) cfg.trace_path = train_trace;
      Trainer trainer(cfg);
      if (!train_resume.empty()) trainer.restore(read_checkpoint(train_resume));
      const auto trace = trainer.run([&](const LossRecord& r) {
        if (train_log_every > 0 && (r.step + 1) % train_log_every == 0)
          out << "step " << r.step + 1 << "/" << cfg.steps << "  L_cls " << format_double(r.cls) << "  L_giou "
              << format_double(r.giou) << "  L_tot " << format_double(r.total) << std::endl;
      });
      if (!trace.empty()) {
        const auto w = std::max<std::size_t>(1, trace.size() / 20);
        out << "smoothed loss ratio (last/first " << w << " steps): " << format_double(smoothed_loss_ratio(trace, w)) << "\n";
      }
      out << "checkpoint: " << cfg.checkpoint_path << "\n";
    } else if (*c_track) {
      tcfg.predictor = parse_predictor_kind(track_predictor);
      tcfg.two_stage = !no_two_stage;
      const auto model = load_model(track_ckpt);
      tcfg.search_factor = model->config().search_factor;
      const auto names = track_dataset(*model, tcfg, track_data, track_out, track_jobs);
      out << "tracked " << names.size() << " sequences (" << to_string(tcfg.predictor) << ") into " << track_out << "\n";
    } else if (*c_eval) {
      const auto report = run_eval(eval_data, eval_results, eval_label);
      write_report(report, eval_out);
      out << "success AUC " << format_double(report.aggregate.success_auc) << "  precision@20 "
          << format_double(report.aggregate.precision) << "  norm precision AUC "
          << format_double(report.aggregate.norm_precision_auc) << "  mean IoU " << format_double(report.aggregate.mean_iou)
          << "\n";
    } else if (*c_plot) {
      std::vector<MetricReport> reports;
      for (const auto& p : plot_reports) {
        reports.push_back(read_report_json(p));
        if (reports.back().label.empty()) reports.back().label = fs::path(p).parent_path().filename().string();
      }
      for (const auto& p : write_plots(reports, plot_out)) out << p << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace tomp
