// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "polarbg/background_model.hpp"
#include "polarbg/cfta.hpp"
#include "polarbg/dmd.hpp"
#include "polarbg/error.hpp"
#include "polarbg/eval.hpp"
#include "polarbg/io.hpp"
#include "polarbg/pipeline.hpp"
#include "polarbg/sim.hpp"
#include "polarbg/tracking.hpp"

using namespace polarbg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using cd = std::complex<double>;

namespace {

const fs::path kData = POLARBG_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(io::read_file(p)); }

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

double nearest(const Eigen::VectorXcd& pool, cd v) {
  double best = 1e300;
  for (Eigen::Index i = 0; i < pool.size(); ++i) best = std::min(best, std::abs(pool(i) - v));
  return best;
}

Outcome dmd_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> rows_d(8, 64);
  double worst = 0.0;
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int rows = rows_d(rng);
    const int cols = std::uniform_int_distribution<int>(6, std::min(32, rows))(rng);
    const auto snaps = gaussian(rng, rows, cols);
    const auto pair = dmd::shift_split(snaps);
    const auto op = dmd::fit_reduced_operator(pair.left, pair.right, 1.0);
    // Oracle: least-squares operator from the normal-equation pseudoinverse.
    const Eigen::MatrixXd pinv = (pair.left.transpose() * pair.left).inverse() * pair.left.transpose();
    const Eigen::MatrixXd ahat = pair.right * pinv;
    const Eigen::VectorXcd full = Eigen::EigenSolver<Eigen::MatrixXd>(ahat, false).eigenvalues();
    const Eigen::VectorXcd reduced = Eigen::EigenSolver<Eigen::MatrixXd>(op.atilde, false).eigenvalues();
    if (reduced.size() != cols - 1) ++failures;
    for (Eigen::Index i = 0; i < reduced.size(); ++i) {
      const double err = nearest(full, reduced(i)) / std::max(1.0, std::abs(reduced(i)));
      worst = std::max(worst, err);
    }
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && worst <= 1e-8 && secs < 10.0,
          "max eigenvalue error " + sci(worst) + ", " + fmt(secs, 2) + " s"};
}

Eigen::MatrixXd synth_modes(std::mt19937_64& rng, int n, int m, const std::vector<cd>& lambdas) {
  Eigen::MatrixXcd phi(n, static_cast<Eigen::Index>(lambdas.size()));
  for (std::size_t j = 0; j < lambdas.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    if (lambdas[j].imag() < 0) {
      phi.col(c) = phi.col(c - 1).conjugate();
    } else {
      phi.col(c).real() = gaussian(rng, n, 1);
      phi.col(c).imag() = lambdas[j].imag() > 0 ? Eigen::MatrixXd(gaussian(rng, n, 1)) : Eigen::MatrixXd::Zero(n, 1);
    }
  }
  Eigen::MatrixXd out(n, m);
  for (int t = 0; t < m; ++t) {
    Eigen::VectorXcd col = Eigen::VectorXcd::Zero(n);
    for (std::size_t j = 0; j < lambdas.size(); ++j) col += std::pow(lambdas[j], t) * phi.col(static_cast<Eigen::Index>(j));
    out.col(t) = col.real();
  }
  return out;
}

Outcome dmd_recovery() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> mag(0.6, 1.05);
  std::uniform_real_distribution<double> ang(0.1, 2.5);
  dmd::DMDConfig cfg;
  cfg.svd_energy = 1.0;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 5;
    std::vector<cd> lambdas;
    while (static_cast<int>(lambdas.size()) < k) {
      if (static_cast<int>(lambdas.size()) + 2 <= k && trial % 2 == 0) {
        const auto l = std::polar(mag(rng), ang(rng));
        lambdas.push_back(l);
        lambdas.push_back(std::conj(l));
      } else {
        lambdas.emplace_back(mag(rng), 0.0);
      }
    }
    const auto m = synth_modes(rng, 40, 30, lambdas);
    const auto model = dmd::train_from_snapshots(m, 0, cfg);
    Eigen::MatrixXd rec(m.rows(), m.cols());
    for (int t = 1; t <= m.cols(); ++t) rec.col(t - 1) = dmd::reconstruct(model, t).real();
    worst = std::max(worst, (rec - m).norm() / m.norm());
  }

  // Static data: any positive threshold flags nothing.
  std::mt19937_64 srng(5);
  const Eigen::VectorXd col = gaussian(srng, 50, 1).cwiseAbs() * 60.0;
  const Eigen::MatrixXd still = col.replicate(1, 20);
  const auto model = dmd::train_from_snapshots(still, 0, dmd::DMDConfig{});
  const Eigen::VectorXd range = Eigen::VectorXd::Constant(50, 10.0);
  std::size_t flagged = 0;
  for (double tau : {1e-9, 1e-3, 1.0, 10.0}) {
    const auto mask = dmd::intensity_foreground_mask({col.data(), 50}, {range.data(), 50},
                                                     {model.background.data(), 50}, tau);
    flagged += static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  }
  return {worst <= 1e-6 && flagged == 0,
          "max relative error " + sci(worst) + ", static flags " + std::to_string(flagged)};
}

double brute_triangle(const cfta::RangeHistogram& h) {
  std::size_t peak = 0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (h.counts[i] >= h.counts[peak]) peak = i;
  }
  const long double px = static_cast<long double>(peak);
  const long double py = static_cast<long double>(h.counts[peak]);
  const long double len = std::sqrt(px * px + py * py);
  long double best = -1.0L;
  std::size_t arg = 0;
  for (std::size_t i = 0; i <= peak; ++i) {
    const long double d = std::fabs(py * static_cast<long double>(i) - px * static_cast<long double>(h.counts[i])) / len;
    if (d >= best) {
      best = d;
      arg = i;
    }
  }
  return h.edges[arg];
}

cfta::RangeHistogram uniform_hist(std::vector<std::int64_t> counts, double width) {
  cfta::RangeHistogram h;
  h.counts = std::move(counts);
  h.bin_size = width;
  for (std::size_t i = 0; i <= h.counts.size(); ++i) h.edges.push_back(width * static_cast<double>(i));
  return h;
}

Outcome triangle_oracle() {
  std::mt19937_64 rng(7);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int bins = std::uniform_int_distribution<int>(2, 150)(rng);
    std::uniform_int_distribution<int> count(0, std::uniform_int_distribution<int>(1, 2000)(rng));
    std::vector<std::int64_t> counts(static_cast<std::size_t>(bins));
    for (auto& c : counts) c = count(rng);
    counts.back() += 1;
    const auto h = uniform_hist(counts, std::uniform_real_distribution<double>(0.05, 2.0)(rng));
    if (cfta::triangle_threshold(h) != brute_triangle(h)) ++mismatches;
  }
  const double example = cfta::triangle_threshold(uniform_hist({0, 0, 0, 0, 0, 100, 0, 0, 0, 700}, 2.0));
  return {mismatches == 0 && example == 16.0,
          std::to_string(mismatches) + " mismatches in 1000, example threshold " + fmt(example, 1) + " m"};
}

std::pair<double, double> separation_range(double bg_sd, double fg_sd) {
  SensorConfig cfg;
  cfg.elevations = {0.0};
  cfg.beam_count = 1;
  double lo = 1e9;
  double hi = -1e9;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> bg(19.0, bg_sd);
    std::normal_distribution<double> fg(15.0, fg_sd);
    std::vector<double> s;
    for (int i = 0; i < 3500; ++i) s.push_back(bg(rng));
    for (int i = 0; i < 500; ++i) s.push_back(fg(rng));
    const auto t = cfta::cfta_unit(s, 0, cfg);
    const double v = t.provenance == cfta::Provenance::Triangle ? t.threshold : -1.0;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

Outcome cfta_separation() {
  // N(mean, variance): second arguments 0.05 and 0.3 are variances.
  const auto [lo, hi] = separation_range(std::sqrt(0.05), std::sqrt(0.3));
  const auto [slo, shi] = separation_range(0.05, 0.3);
  return {lo > 15.5 && hi < 18.5, "thresholds in [" + fmt(lo, 3) + ", " + fmt(hi, 3) +
                                      "] m; with 0.05/0.3 read as standard deviations [" + fmt(slo, 3) + ", " +
                                      fmt(shi, 3) + "] m"};
}

struct SceneRun {
  sim::Simulation sim;
  std::vector<pipeline::FrameResult> results;
  std::vector<tracking::Trajectory> trajectories;
};

SceneRun run_scene(const std::string& name, const std::string& config, int frames) {
  const auto cfg = load(kData / config);
  const auto sensor = cfg.at("sensor").get<SensorConfig>();
  const auto dmd_cfg = cfg.at("dmd").get<dmd::DMDConfig>();
  const auto pipe = cfg.at("pipeline").get<pipeline::PipelineConfig>();
  const auto trk = cfg.at("tracker").get<tracking::TrackerConfig>();
  const auto scene = load(kData / (name + "_scene.json")).get<sim::Scene>();
  const auto roi = pipeline::build_roi_mask(pipeline::roi_from_json(load(kData / (name + "_roi.json"))), pipe.roi_cell_size);

  SceneRun run;
  run.sim = sim::simulate(scene, frames, sensor);
  const auto model = train_background_model(run.sim.frames, sensor, dmd_cfg);
  tracking::Tracker tracker(trk);
  for (const auto& f : run.sim.frames) {
    run.results.push_back(pipeline::detect_frame(f, model, roi, pipe));
    tracker.step(run.results.back().detections, f.frame_id);
  }
  run.trajectories = tracking::extract_trajectories(tracker);
  return run;
}

Outcome background_reduction() {
  const auto run = run_scene("corridor", "config.json", 200);
  std::size_t returns = 0;
  std::size_t foreground = 0;
  for (const auto& r : run.results) {
    returns += r.returns;
    foreground += r.foreground_cells;
  }
  const double bg = 1.0 - static_cast<double>(foreground) / static_cast<double>(returns);
  return {bg >= 0.90, "background fraction " + fmt(bg * 100.0, 2) + "% of " + std::to_string(returns) + " returns"};
}

Outcome intersection() {
  const auto run = run_scene("intersection", "config.json", 200);
  std::vector<std::vector<std::uint8_t>> pred;
  for (std::size_t f = 0; f < run.results.size(); ++f) {
    const auto& frame = run.sim.frames[f];
    std::vector<std::uint8_t> mask(frame.range.size(), 0);
    for (const auto& p : run.results[f].points) {
      if (p.det_id >= 0) mask[frame.index(p.beam, p.bin)] = 1;
    }
    pred.push_back(std::move(mask));
  }
  const auto pm = eval::point_metrics(pred, run.sim.truth.labels, run.sim.frames);
  const auto zones = tracking::zones_from_json(load(kData / "intersection_zones.json"));
  const auto predicted = tracking::count_movements(run.trajectories, zones);
  const auto truth = tracking::count_movements(run.sim.truth.trajectories, zones);
  const auto f_near = pm.bands[0].f1();
  const auto f_far = pm.bands[1].f1();
  const bool counts_ok = predicted.counts == truth.counts && predicted.unclassified == 0 && truth.unclassified == 0;
  int truth_total = 0;
  int pred_total = 0;
  for (const auto& [k, v] : truth.counts) truth_total += v;
  for (const auto& [k, v] : predicted.counts) pred_total += v;
  return {f_near && f_far && *f_near >= 0.95 && *f_far >= 0.95 && counts_ok,
          "F1 [0,30) " + (f_near ? fmt(*f_near) : "undefined") + ", [30,100) " + (f_far ? fmt(*f_far) : "undefined") +
              ", counts " + std::to_string(pred_total) + "/" + std::to_string(truth_total) +
              (counts_ok ? " exact" : " differ") + " over " + std::to_string(truth.counts.size()) + " movements"};
}

Outcome tracking_sanity() {
  // Noiseless constant velocity.
  tracking::TrackerConfig cfg;
  tracking::Tracker tracker(cfg);
  const double vx = 12.0;
  const double vy = 3.0;
  for (int f = 0; f <= 10; ++f) {
    pipeline::Detection d;
    d.frame_id = f;
    d.centroid = {-20.0 + vx * cfg.dt * f, 5.0 + vy * cfg.dt * f, 0.0};
    tracker.step(std::vector<pipeline::Detection>{d}, f);
  }
  const auto& state = tracker.tracks().front().state;
  const double speed = std::hypot(state(2), state(3));
  const double speed_err = std::abs(speed - std::hypot(vx, vy)) / std::hypot(vx, vy);

  // Two-path crossing scene through the full pipeline.
  const auto run = run_scene("demo", "demo_config.json", 60);
  int switches = 0;
  std::map<int, std::set<int>> tracks_of_vehicle;
  const double dt = 1.0 / load(kData / "demo_config.json").at("sensor").value("frame_rate", 10.0);
  const auto scene = load(kData / "demo_scene.json").get<sim::Scene>();
  for (const auto& traj : run.trajectories) {
    std::set<int> vehicles;
    for (const auto& p : traj.points) {
      int best = -1;
      double best_d = 3.0;
      for (const auto& v : scene.vehicles) {
        const auto pose = sim::vehicle_pose(v, static_cast<double>(p.frame) * dt);
        if (!pose) continue;
        const double d = std::hypot(pose->x - p.x, pose->y - p.y);
        if (d < best_d) {
          best_d = d;
          best = v.id;
        }
      }
      if (best >= 0) {
        vehicles.insert(best);
        tracks_of_vehicle[best].insert(traj.track_id);
      }
    }
    switches += std::max<int>(0, static_cast<int>(vehicles.size()) - 1);
  }
  for (const auto& [v, ids] : tracks_of_vehicle) switches += static_cast<int>(ids.size()) - 1;
  const bool all_tracked = tracks_of_vehicle.size() == scene.vehicles.size();
  return {speed_err <= 0.01 && switches == 0 && all_tracked,
          "speed error " + fmt(speed_err * 100.0, 3) + "% after 10 frames, identity switches " +
              std::to_string(switches) + ", vehicles tracked " + std::to_string(tracks_of_vehicle.size()) + "/" +
              std::to_string(scene.vehicles.size())};
}

Outcome metric_identities() {
  struct Row {
    double p, r, f1;
  };
  const Row rows[] = {{99.23, 73.13, 84.23}, {96.27, 82.08, 88.61}, {97.69, 70.08, 81.61}, {90.31, 67.87, 77.50}};
  double worst = 0.0;
  for (const auto& row : rows) {
    worst = std::max(worst, std::abs(*eval::f1_score(row.p / 100.0, row.r / 100.0) * 100.0 - row.f1));
  }
  tracking::MovementCounts lidar, video;
  lidar.counts[{"all", "all"}] = 1008;
  video.counts[{"all", "all"}] = 1064;
  const auto m = eval::count_metrics(lidar, video);
  const auto err = std::round(*m.total.error_rate * 10000.0) / 100.0;
  const auto acc = std::round(*m.total.accuracy * 10000.0) / 100.0;
  return {worst <= 0.1 && err == 5.26 && acc == 94.74,
          "max F1 deviation " + fmt(worst, 3) + " pp, totals " + fmt(err, 2) + "% / " + fmt(acc, 2) + "%"};
}

Outcome performance() {
  SensorConfig sensor;
  sensor.beam_count = 128;
  for (int b = 0; b < 128; ++b) sensor.elevations.push_back(-25.0 + 40.0 * b / 127.0);
  const auto scene = load(kData / "intersection_scene.json").get<sim::Scene>();
  const auto cfg = load(kData / "config.json");
  const auto pipe = cfg.at("pipeline").get<pipeline::PipelineConfig>();
  const auto roi = pipeline::build_roi_mask(pipeline::roi_from_json(load(kData / "intersection_roi.json")), pipe.roi_cell_size);
  // Range thresholds need at least 30 samples per cell, so train on 40 frames and time the next 10.
  const auto run = sim::simulate(scene, 50, sensor);
  const std::vector<PolarFrame> train(run.frames.begin(), run.frames.begin() + 40);
  const auto model = train_background_model(train, sensor, cfg.at("dmd").get<dmd::DMDConfig>());
  tracking::Tracker tracker(cfg.at("tracker").get<tracking::TrackerConfig>());
  double total = 0.0;
  double worst = 0.0;
  for (std::size_t f = 40; f < 50; ++f) {
    const auto t0 = Clock::now();
    const auto r = pipeline::detect_frame(run.frames[f], model, roi, pipe);
    tracker.step(r.detections, run.frames[f].frame_id);
    const double s = seconds_since(t0);
    total += s;
    worst = std::max(worst, s);
  }
  const double mean = total / 10.0;
  return {worst <= 1.0, "128x1800 frame: mean " + fmt(mean * 1000.0, 1) + " ms, max " + fmt(worst * 1000.0, 1) +
                            " ms (target 260 ms, limit 1000 ms), threads " + std::to_string(io::thread_count())};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + POLARBG_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

bool cli_chain(const fs::path& dir, std::string& failed) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cfg = q(kData / "demo_config.json");
  const std::vector<std::string> steps = {
      "simulate --scene " + q(kData / "demo_scene.json") + " --config " + cfg + " --frames 40 --zones " +
          q(kData / "demo_zones.json") + " --out-dir " + q(dir),
      "train --frames " + q(dir / "frames.csv") + " --config " + cfg + " --model " + q(dir / "model.json"),
      "detect --frames " + q(dir / "frames.csv") + " --model " + q(dir / "model.json") + " --roi " +
          q(kData / "demo_roi.json") + " --config " + cfg + " --out-dir " + q(dir),
      "track --detections " + q(dir / "detections.csv") + " --zones " + q(kData / "demo_zones.json") + " --config " +
          cfg + " --out-dir " + q(dir),
      "eval --mode points --frames " + q(dir / "frames.csv") + " --config " + cfg + " --labels " +
          q(dir / "gt_labels.csv") + " --foreground " + q(dir / "foreground.csv") + " --out " +
          q(dir / "points.json") + " --table " + q(dir / "points.txt"),
      "eval --mode counts --predicted " + q(dir / "counts.json") + " --truth " + q(dir / "gt_counts.json") +
          " --out " + q(dir / "count_metrics.json") + " --table " + q(dir / "count_metrics.txt"),
      "plot --kind stmap --frames " + q(dir / "frames.csv") + " --model " + q(dir / "model.json") + " --beam 3 --out " +
          q(dir / "stmap"),
      "plot --kind trajectories --tracks " + q(dir / "tracks.csv") + " --zones " + q(kData / "demo_zones.json") +
          " --out " + q(dir / "trajectories.svg"),
      "plot --kind histogram --frames " + q(dir / "frames.csv") + " --config " + cfg + " --beam 3 --bin 100 --out " +
          q(dir / "histogram.svg"),
  };
  for (const auto& s : steps) {
    // Each command runs twice; the second run must reproduce the first byte for byte.
    std::map<fs::path, std::string> before;
    if (run_cli(s) != 0) {
      failed = s.substr(0, s.find(' '));
      return false;
    }
    for (const auto& e : fs::directory_iterator(dir)) before[e.path()] = io::read_file(e.path());
    if (run_cli(s) != 0) {
      failed = s.substr(0, s.find(' ')) + " (rerun)";
      return false;
    }
    for (const auto& [path, bytes] : before) {
      if (io::read_file(path) != bytes) {
        failed = s.substr(0, s.find(' ')) + " changed " + path.filename().string();
        return false;
      }
    }
  }
  return true;
}

Outcome determinism() {
  const fs::path work = POLARBG_WORK_DIR;
  std::string failed;
  if (!cli_chain(work / "a", failed)) return {false, "CLI rerun failed at " + failed};
  if (!cli_chain(work / "b", failed)) return {false, "CLI rerun failed at " + failed};
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(work / "a")) {
    const auto other = work / "b" / e.path().filename();
    if (!fs::exists(other) || io::read_file(e.path()) != io::read_file(other)) {
      return {false, "independent runs differ in " + e.path().filename().string()};
    }
    ++files;
  }
  return {true, "9 commands rerun with identical bytes; " + std::to_string(files) + " files match across two runs"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"DMD oracle equivalence", dmd_oracle},
      {"DMD exact recovery", dmd_recovery},
      {"Triangle oracle equivalence", triangle_oracle},
      {"CFTA separation", cfta_separation},
      {"Background reduction", background_reduction},
      {"End-to-end synthetic detection", intersection},
      {"Tracking sanity", tracking_sanity},
      {"Metric identities", metric_identities},
      {"Performance target", performance},
      {"Determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
