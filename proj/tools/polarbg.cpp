// Command-line front end: simulate, train, detect, track, eval, plot.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "polarbg/background_model.hpp"
#include "polarbg/cfta.hpp"
#include "polarbg/error.hpp"
#include "polarbg/eval.hpp"
#include "polarbg/io.hpp"
#include "polarbg/pipeline.hpp"
#include "polarbg/plot.hpp"
#include "polarbg/sim.hpp"
#include "polarbg/tracking.hpp"

namespace fs = std::filesystem;
using namespace polarbg;

namespace {

struct RunConfig {
  SensorConfig sensor;
  dmd::DMDConfig dmd;
  pipeline::PipelineConfig pipeline;
  tracking::TrackerConfig tracker;
};

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

template <typename T>
T section(const nlohmann::json& j, const char* key, const fs::path& path) {
  try {
    return j.contains(key) ? j.at(key).get<T>() : T{};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + " [" + key + "]: " + e.what());
  }
}

RunConfig load_config(const fs::path& path) {
  const auto j = read_json(path);
  if (!j.contains("sensor")) throw Error(ErrorCode::InvalidConfig, path.string() + ": missing sensor section");
  RunConfig cfg;
  cfg.sensor = section<SensorConfig>(j, "sensor", path);
  cfg.dmd = section<dmd::DMDConfig>(j, "dmd", path);
  cfg.pipeline = section<pipeline::PipelineConfig>(j, "pipeline", path);
  cfg.tracker = section<tracking::TrackerConfig>(j, "tracker", path);
  cfg.sensor.validate();
  cfg.dmd.validate();
  cfg.pipeline.validate();
  cfg.tracker.validate();
  return cfg;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::atomic_write(path, contents);
}

tracking::MovementZones load_zones(const fs::path& path) {
  auto zones = tracking::zones_from_json(read_json(path));
  zones.validate();
  return zones;
}

BackgroundModel load_model(const fs::path& path) { return model_from_json(read_json(path)); }

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scene, config, out_dir, zones;
  int frames = 0;
};

void cmd_simulate(const SimulateArgs& a) {
  const auto cfg = load_config(a.config);
  const auto scene = read_json(a.scene).get<sim::Scene>();
  const auto result = sim::simulate(scene, a.frames, cfg.sensor);
  const fs::path out = a.out_dir;
  write(out / "frames.csv", write_frames_csv(result.frames, cfg.sensor));
  write(out / "gt_labels.csv", sim::write_labels_csv(result.frames, result.truth.labels));
  write(out / "gt_tracks.csv", tracking::write_tracks_csv(result.truth.trajectories));
  if (!a.zones.empty()) {
    const auto counts = tracking::count_movements(result.truth.trajectories, load_zones(a.zones));
    write(out / "gt_counts.json", dump(tracking::counts_to_json(counts)));
  }
}

struct TrainArgs {
  std::string frames, config, model;
  int limit = 0;
};

void cmd_train(const TrainArgs& a) {
  const auto cfg = load_config(a.config);
  auto frames = read_frames_csv(io::read_file(a.frames), cfg.sensor);
  if (a.limit > 0 && static_cast<std::size_t>(a.limit) < frames.size()) frames.resize(static_cast<std::size_t>(a.limit));
  const auto model = train_background_model(frames, cfg.sensor, cfg.dmd);
  write(a.model, dump(model_to_json(model)));
}

struct DetectArgs {
  std::string frames, model, roi, config, out_dir, fusion, timing;
};

void cmd_detect(const DetectArgs& a) {
  const auto model = load_model(a.model);
  pipeline::PipelineConfig pcfg;
  if (!a.config.empty()) {
    const auto cfg = load_config(a.config);
    check_compatible(model, cfg.sensor);
    pcfg = cfg.pipeline;
  }
  if (!a.fusion.empty()) pcfg.fusion_mode = pipeline::fusion_from_string(a.fusion);
  const auto frames = read_frames_csv(io::read_file(a.frames), model.sensor);
  const auto polygons = pipeline::roi_from_json(read_json(a.roi));
  const auto roi = pipeline::build_roi_mask(polygons, pcfg.roi_cell_size);

  std::vector<std::vector<pipeline::Detection>> detections(frames.size());
  std::vector<std::vector<pipeline::ForegroundPoint>> points(frames.size());
  std::vector<std::int64_t> ids(frames.size());
  std::vector<pipeline::StageTimes> times(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto result = pipeline::detect_frame(frames[i], model, roi, pcfg, &times[i]);
    detections[i] = std::move(result.detections);
    points[i] = std::move(result.points);
    ids[i] = frames[i].frame_id;
  }
  const fs::path out = a.out_dir;
  write(out / "detections.csv", pipeline::write_detections_csv(detections));
  write(out / "foreground.csv", pipeline::write_foreground_csv(ids, points));
  if (!a.timing.empty()) write(a.timing, dump(eval::to_json(eval::timing_report(times, {}))));
}

struct TrackArgs {
  std::string detections, zones, config, out_dir;
};

void cmd_track(const TrackArgs& a) {
  tracking::TrackerConfig tcfg;
  if (!a.config.empty()) tcfg = load_config(a.config).tracker;
  const auto zones = load_zones(a.zones);
  const auto detections = pipeline::read_detections_csv(io::read_file(a.detections));

  std::map<std::int64_t, std::vector<pipeline::Detection>> by_frame;
  for (const auto& d : detections) by_frame[d.frame_id].push_back(d);
  tracking::Tracker tracker(tcfg);
  if (!by_frame.empty()) {
    // Frames without detections still age the tracks.
    const auto first = by_frame.begin()->first;
    const auto last = by_frame.rbegin()->first;
    for (auto f = first; f <= last; ++f) {
      const auto it = by_frame.find(f);
      if (it == by_frame.end()) {
        tracker.step({}, f);
      } else {
        tracker.step(it->second, f);
      }
    }
  }
  const auto trajectories = tracking::extract_trajectories(tracker);
  const auto counts = tracking::count_movements(trajectories, zones);
  const fs::path out = a.out_dir;
  write(out / "tracks.csv", tracking::write_tracks_csv(trajectories));
  write(out / "counts.json", dump(tracking::counts_to_json(counts)));
}

struct EvalArgs {
  std::string mode, frames, config, labels, foreground, predicted, truth, out, table;
  bool all_foreground = false;
};

void cmd_eval(const EvalArgs& a) {
  std::string table;
  nlohmann::json metrics;
  if (a.mode == "points") {
    for (const auto* req : {&a.frames, &a.config, &a.labels, &a.foreground}) {
      if (req->empty()) throw Error(ErrorCode::InvalidConfig, "points mode needs --frames --config --labels --foreground");
    }
    const auto cfg = load_config(a.config);
    const auto frames = read_frames_csv(io::read_file(a.frames), cfg.sensor);
    const auto truth = sim::read_labels_csv(io::read_file(a.labels), frames);
    const auto cells = pipeline::read_foreground_csv(io::read_file(a.foreground));
    const auto predicted = eval::cells_to_masks(cells, frames, !a.all_foreground);
    const auto m = eval::point_metrics(predicted, truth, frames);
    metrics = eval::to_json(m);
    table = eval::format_table(m);
  } else {
    if (a.predicted.empty() || a.truth.empty()) {
      throw Error(ErrorCode::InvalidConfig, "counts mode needs --predicted and --truth");
    }
    const auto m = eval::count_metrics(tracking::counts_from_json(read_json(a.predicted)),
                                       tracking::counts_from_json(read_json(a.truth)));
    metrics = eval::to_json(m);
    table = eval::format_table(m);
  }
  write(a.out, dump(metrics));
  if (!a.table.empty()) write(a.table, table);
  std::cout << table;
}

struct PlotArgs {
  std::string kind, frames, model, config, tracks, zones, out;
  int beam = 0;
  int bin = 0;
};

void cmd_plot(const PlotArgs& a) {
  if (a.kind == "stmap") {
    if (a.frames.empty() || a.model.empty()) throw Error(ErrorCode::InvalidConfig, "stmap needs --frames --model");
    const auto model = load_model(a.model);
    const auto frames = read_frames_csv(io::read_file(a.frames), model.sensor);
    const auto images = plot::stmap_triptych(frames, model, a.beam);
    const char* suffix[] = {"_observed.pgm", "_background.pgm", "_foreground.pgm"};
    for (int i = 0; i < 3; ++i) write(a.out + suffix[i], images[static_cast<std::size_t>(i)]);
  } else if (a.kind == "trajectories") {
    if (a.tracks.empty()) throw Error(ErrorCode::InvalidConfig, "trajectories needs --tracks");
    const auto trajectories = tracking::read_tracks_csv(io::read_file(a.tracks));
    const auto zones = a.zones.empty() ? tracking::MovementZones{} : load_zones(a.zones);
    write(a.out, plot::trajectories_svg(trajectories, zones));
  } else {
    if (a.frames.empty() || a.config.empty()) throw Error(ErrorCode::InvalidConfig, "histogram needs --frames --config");
    const auto cfg = load_config(a.config);
    if (a.beam < 0 || a.beam >= cfg.sensor.beam_count || a.bin < 0 || a.bin >= cfg.sensor.azimuth_bins) {
      throw Error(ErrorCode::InvalidConfig, "beam/bin outside the sensor grid");
    }
    const auto frames = read_frames_csv(io::read_file(a.frames), cfg.sensor);
    const auto unit = cfta::collect_unit_ranges(frames, a.beam, a.bin);
    if (unit.samples.empty()) throw Error(ErrorCode::EmptySamples, "unit has no returns");
    const auto hist = cfta::fine_histogram(cfta::coarse_step(unit.samples, cfg.sensor.max_range));
    write(a.out, plot::histogram_svg(hist, cfta::triangle_threshold(hist)));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Roadside LiDAR background subtraction, detection and tracking"};
  app.require_subcommand(1);

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Render a scene into frames.csv, gt_labels.csv and gt_tracks.csv");
  sim_cmd->add_option("--scene", sa.scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--config", sa.config, "Run config JSON (sensor section used)")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--frames", sa.frames, "Number of frames")->required();
  sim_cmd->add_option("--out-dir", sa.out_dir, "Output directory")->required();
  sim_cmd->add_option("--zones", sa.zones, "Movement zones JSON; also writes gt_counts.json")->check(CLI::ExistingFile);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Learn the background model from frames");
  train_cmd->add_option("--frames", ta.frames, "Frames CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", ta.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--model", ta.model, "Output model JSON")->required();
  train_cmd->add_option("--limit", ta.limit, "Train on the first N frames only (0 = all)");

  DetectArgs da;
  auto* detect_cmd = app.add_subcommand("detect", "Subtract background and cluster vehicles");
  detect_cmd->add_option("--frames", da.frames, "Frames CSV")->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--model", da.model, "Model JSON")->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--roi", da.roi, "ROI polygons JSON")->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--config", da.config, "Run config JSON; its sensor must match the model")
      ->check(CLI::ExistingFile);
  detect_cmd->add_option("--fusion", da.fusion, "Mask fusion: union|intersection|range|intensity")
      ->check(CLI::IsMember({"union", "intersection", "range", "intensity"}));
  detect_cmd->add_option("--out-dir", da.out_dir, "Output directory")->required();
  detect_cmd->add_option("--timing", da.timing, "Write per-stage timing JSON here");

  TrackArgs ka;
  auto* track_cmd = app.add_subcommand("track", "Track detections and count movements");
  track_cmd->add_option("--detections", ka.detections, "Detections CSV")->required()->check(CLI::ExistingFile);
  track_cmd->add_option("--zones", ka.zones, "Movement zones JSON")->required()->check(CLI::ExistingFile);
  track_cmd->add_option("--config", ka.config, "Run config JSON (tracker section used)")->check(CLI::ExistingFile);
  track_cmd->add_option("--out-dir", ka.out_dir, "Output directory")->required();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Point-level or count-level metrics");
  eval_cmd->add_option("--mode", ea.mode, "points|counts")->required()->check(CLI::IsMember({"points", "counts"}));
  eval_cmd->add_option("--frames", ea.frames, "Frames CSV (points)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--config", ea.config, "Run config JSON (points)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--labels", ea.labels, "Ground-truth labels CSV (points)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--foreground", ea.foreground, "Foreground CSV from detect (points)")->check(CLI::ExistingFile);
  eval_cmd->add_flag("--all-foreground", ea.all_foreground, "Score unclustered foreground points too (points)");
  eval_cmd->add_option("--predicted", ea.predicted, "Predicted counts JSON (counts)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--truth", ea.truth, "Ground-truth counts JSON (counts)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ea.out, "Metrics JSON")->required();
  eval_cmd->add_option("--table", ea.table, "Also write the text table here");

  PlotArgs pa;
  auto* plot_cmd = app.add_subcommand("plot", "Render PGM/SVG figures");
  plot_cmd->add_option("--kind", pa.kind, "stmap|trajectories|histogram")
      ->required()
      ->check(CLI::IsMember({"stmap", "trajectories", "histogram"}));
  plot_cmd->add_option("--frames", pa.frames, "Frames CSV (stmap, histogram)")->check(CLI::ExistingFile);
  plot_cmd->add_option("--model", pa.model, "Model JSON (stmap)")->check(CLI::ExistingFile);
  plot_cmd->add_option("--config", pa.config, "Run config JSON (histogram)")->check(CLI::ExistingFile);
  plot_cmd->add_option("--tracks", pa.tracks, "Tracks CSV (trajectories)")->check(CLI::ExistingFile);
  plot_cmd->add_option("--zones", pa.zones, "Movement zones JSON (trajectories)")->check(CLI::ExistingFile);
  plot_cmd->add_option("--beam", pa.beam, "Beam index (stmap, histogram)");
  plot_cmd->add_option("--bin", pa.bin, "Azimuth bin (histogram)");
  plot_cmd->add_option("--out", pa.out, "Output file; stmap uses it as a prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim_cmd) cmd_simulate(sa);
    if (*train_cmd) cmd_train(ta);
    if (*detect_cmd) cmd_detect(da);
    if (*track_cmd) cmd_track(ka);
    if (*eval_cmd) cmd_eval(ea);
    if (*plot_cmd) cmd_plot(pa);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_numerical(e.code()) ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
