#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "polarbg/error.hpp"
#include "polarbg/frames.hpp"
#include "support.hpp"

using namespace polarbg;

TEST_CASE("spherical to cartesian") {
  auto p = spherical_to_cartesian(10, 0, 0);
  CHECK(p.x == doctest::Approx(10));
  CHECK(p.y == doctest::Approx(0));
  CHECK(p.z == doctest::Approx(0));

  p = spherical_to_cartesian(5, 90, 123);
  CHECK(std::abs(p.x) < 1e-12);
  CHECK(std::abs(p.y) < 1e-12);
  CHECK(p.z == doctest::Approx(5));

  p = spherical_to_cartesian(2, 30, 60);
  CHECK(p.x == doctest::Approx(0.86603).epsilon(1e-5));
  CHECK(p.y == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(p.z == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cartesian to spherical") {
  auto s = cartesian_to_spherical(10, 0, 0);
  CHECK(s.range == doctest::Approx(10));
  CHECK(s.elevation == doctest::Approx(0));
  CHECK(s.azimuth == doctest::Approx(0));

  s = cartesian_to_spherical(0, 0, 5);
  CHECK(s.range == doctest::Approx(5));
  CHECK(s.elevation == doctest::Approx(90));
  CHECK(s.azimuth == 0.0);

  CHECK_THROWS_AS(cartesian_to_spherical(0, 0, 0), Error);
}

TEST_CASE("spherical round trip on random points") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-200, 200);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng), y = u(rng), z = u(rng) * 0.1;
    const auto s = cartesian_to_spherical(x, y, z);
    CHECK(s.azimuth >= 0.0);
    CHECK(s.azimuth < 360.0);
    const auto p = spherical_to_cartesian(s.range, s.elevation, s.azimuth);
    const double scale = std::sqrt(x * x + y * y + z * z);
    CHECK(std::abs(p.x - x) <= 1e-9 * scale);
    CHECK(std::abs(p.y - y) <= 1e-9 * scale);
    CHECK(std::abs(p.z - z) <= 1e-9 * scale);
  }
}

TEST_CASE("normalize azimuth") {
  CHECK(normalize_azimuth(-90) == 270);
  CHECK(normalize_azimuth(0) == 0);
  CHECK(normalize_azimuth(179.99) == doctest::Approx(179.99));
  CHECK(normalize_azimuth(360) == 0);
  CHECK(normalize_azimuth(-1e-18) < 360.0);
}

TEST_CASE("azimuth hash") {
  const auto cfg = testsupport::sensor(1);
  CHECK(azimuth_bin(0.0, cfg) == 1);
  CHECK(azimuth_bin(359.9, cfg) == 0);
  CHECK(azimuth_bin(180.0, cfg) == 901);
  CHECK(azimuth_bin(0.2, cfg) == 2);
  CHECK(azimuth_bin(0.19999, cfg) == 1);
  CHECK(azimuth_bin(359.8, cfg) == 0);

  // A uniform sweep hits every bin, and each bin center hashes back to itself.
  std::vector<int> seen(1800, 0);
  for (int k = 0; k < 18000; ++k) ++seen[static_cast<std::size_t>(azimuth_bin(k * 0.02 + 0.01, cfg))];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 10; }));
  for (int b = 0; b < 1800; ++b) CHECK(azimuth_bin(bin_center_azimuth(b, cfg), cfg) == b);
}

TEST_CASE("sensor config validation") {
  auto cfg = testsupport::sensor(2);
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.elevations = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.azimuth_resolution = 0.25;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.max_range = 0;
  CHECK_THROWS_AS(bad.validate(), Error);

  const nlohmann::json j = cfg;
  CHECK(j.at("azimuth_bins") == 1800);
  const auto back = j.get<SensorConfig>();
  CHECK(sensor_hash(back) == sensor_hash(cfg));
  auto other = cfg;
  other.max_range = 120;
  CHECK(sensor_hash(other) != sensor_hash(cfg));
}

TEST_CASE("assemble frame keeps the nearer return") {
  const auto cfg = testsupport::sensor(2);
  const auto empty = assemble_frame({}, 0, cfg);
  CHECK(std::all_of(empty.range.begin(), empty.range.end(), [](double r) { return r == 0.0; }));

  std::vector<PointRecord> pts = {{1, 10.05, 18.2, 40}, {1, 10.1, 15.1, 90}};
  const auto f = assemble_frame(pts, 3, cfg);
  const auto cell = f.index(1, azimuth_bin(10.05, cfg));
  CHECK(f.range[cell] == 15.1);
  CHECK(f.intensity[cell] == 90);
  CHECK(f.frame_id == 3);
  CHECK(f.timestamp == doctest::Approx(0.3));

  CHECK_THROWS_AS(assemble_frame(std::vector<PointRecord>{{2, 0, 1, 1}}, 0, cfg), Error);
  CHECK_THROWS_AS(assemble_frame(std::vector<PointRecord>{{0, 360, 1, 1}}, 0, cfg), Error);
  CHECK_THROWS_AS(assemble_frame(std::vector<PointRecord>{{0, 0, 201, 1}}, 0, cfg), Error);
  CHECK_THROWS_AS(assemble_frame(std::vector<PointRecord>{{0, 0, 1, 256}}, 0, cfg), Error);
}

TEST_CASE("assemble frame is order independent") {
  const auto cfg = testsupport::sensor(4, 360);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> beam(0, 3);
  std::uniform_real_distribution<double> az(0, 360), r(0.5, 200), in(0, 255);
  std::vector<PointRecord> pts;
  for (int i = 0; i < 3000; ++i) pts.push_back({beam(rng), az(rng), r(rng), in(rng)});
  // Exact duplicates in range with different intensity exercise the tie rule.
  pts.push_back({0, 5.5, 7.0, 10});
  pts.push_back({0, 5.5, 7.0, 200});
  const auto a = assemble_frame(pts, 0, cfg);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto b = assemble_frame(pts, 0, cfg);
    CHECK(a.range == b.range);
    CHECK(a.intensity == b.intensity);
  }
}

TEST_CASE("collision-free points fill exactly their cells") {
  const auto cfg = testsupport::sensor(3, 360);
  std::vector<PointRecord> pts;
  for (int b = 0; b < 3; ++b) {
    for (int k = 0; k < 50; ++k) pts.push_back({b, k * 7.0 + 0.5, 10.0 + k, 5.0});
  }
  const auto f = assemble_frame(pts, 0, cfg);
  CHECK(std::count_if(f.range.begin(), f.range.end(), [](double r) { return r > 0; }) == 150);
}

TEST_CASE("st matrix columns follow frame ids") {
  const auto cfg = testsupport::sensor(2, 360);
  std::vector<PolarFrame> frames;
  for (int id : {4, 1, 3}) {
    PolarFrame f(id, cfg);
    for (int bin = 0; bin < 360; ++bin) {
      f.range[f.index(1, bin)] = id + bin * 0.01;
      f.intensity[f.index(1, bin)] = id;
    }
    frames.push_back(f);
  }
  const auto st = build_st_matrix(frames, 1, Channel::Intensity);
  CHECK(st.data.rows() == 360);
  CHECK(st.data.cols() == 3);
  CHECK(st.frame_ids == std::vector<std::int64_t>{1, 3, 4});
  CHECK(st.data(0, 0) == 1);
  CHECK(st.data(10, 2) == 4);
  const auto rs = build_st_matrix(frames, 1, Channel::Range);
  for (int j = 0; j < 3; ++j) {
    const auto& src = *std::find_if(frames.begin(), frames.end(),
                                    [&](const PolarFrame& f) { return f.frame_id == rs.frame_ids[j]; });
    for (int bin = 0; bin < 360; ++bin) CHECK(rs.data(bin, j) == src.range[src.index(1, bin)]);
  }

  frames.emplace_back(9, testsupport::sensor(3, 360));
  CHECK_THROWS_AS(build_st_matrix(frames, 0, Channel::Range), Error);
}

TEST_CASE("frames csv round trip") {
  const auto cfg = testsupport::sensor(3, 720);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> r(0.5, 200), in(0, 255), keep(0, 1);
  std::vector<PolarFrame> frames;
  for (int id = 0; id < 3; ++id) {
    PolarFrame f(id, cfg);
    for (std::size_t c = 0; c < f.range.size(); ++c) {
      if (keep(rng) < 0.3) continue;
      f.range[c] = r(rng);
      f.intensity[c] = in(rng);
    }
    frames.push_back(f);
  }
  const auto csv = write_frames_csv(frames, cfg);
  CHECK(csv.rfind(kFramesCsvHeader, 0) == 0);
  const auto back = read_frames_csv(csv, cfg);
  REQUIRE(back.size() == frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(back[i].frame_id == frames[i].frame_id);
    CHECK(back[i].range == frames[i].range);
    CHECK(back[i].intensity == frames[i].intensity);
  }
  CHECK(write_frames_csv(back, cfg) == csv);
  CHECK_THROWS_AS(read_frames_csv("frame,beam\n1,2\n", cfg), Error);
  CHECK_THROWS_AS(read_frames_csv(std::string(kFramesCsvHeader) + "\n0,0,abc,1,1\n", cfg), Error);
}

TEST_CASE("cell position uses the bin center") {
  const auto cfg = testsupport::sensor(11);
  PolarFrame f(0, cfg);
  const int bin = azimuth_bin(90.1, cfg);
  f.range[f.index(10, bin)] = 20.0;
  const auto p = cell_position(f, 10, bin, cfg);
  CHECK(p.x == doctest::Approx(20.0 * std::cos(90.1 * M_PI / 180)).epsilon(1e-9));
  CHECK(p.y == doctest::Approx(20.0).epsilon(1e-4));
  CHECK(p.z == doctest::Approx(0.0));
}
