#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <doctest.h>

#include "radartrack/dataset.hpp"
#include "radartrack/episode.hpp"
#include "radartrack/radar_sim.hpp"

using namespace radartrack;
using namespace radartrack::radar_sim;

namespace {

Scene point_scene(double x, double y, double vx, double vy) {
  Scene s;
  s.target_state = {x, y, vx, vy};
  s.target_rcs = 1000.0;
  s.noise_floor = 1e-6;
  return s;
}

}  // namespace

TEST_CASE("radar constants") {
  RadarParams p;
  CHECK(p.range_resolution() == doctest::Approx(0.0375).epsilon(1e-4));
  CHECK(p.velocity_resolution() == doctest::Approx(0.0304).epsilon(2e-3));
  // 5.025 m uses the rounded 0.0375 m; exact c / (2 B) gives 5.0215 m.
  CHECK(p.range_resolution() * 134 == doctest::Approx(134 * 299792458.0 / 8e9).epsilon(1e-12));
  CHECK(std::abs(p.range_resolution() * 134 - 5.025) < 134 * 0.00005);
  CHECK(range_of_bin(133, p) == doctest::Approx(4.99).epsilon(1e-3));
  CHECK_NOTHROW(p.validate());

  RadarParams bad = p;
  bad.f1 = bad.f0;
  CHECK_THROWS_AS(bad.validate(), InvalidSpec);
  bad = p;
  bad.chirp_duration = 300e-6;
  CHECK_THROWS_AS(bad.validate(), InvalidSpec);
  bad = p;
  bad.range_bins_kept = 2000;
  CHECK_THROWS_AS(bad.validate(), InvalidSpec);
  bad = p;
  bad.frame_rate = 20.0;  // 20 * 256 * 250 us > 1
  CHECK_THROWS_AS(bad.validate(), InvalidSpec);
}

TEST_CASE("constant velocity trajectory") {
  RadarParams p;
  TrajectorySpec t;
  t.kind = MotionKind::constant_velocity;
  t.start = {0.0, 1.0};
  t.velocity = {0.5, 0.0};
  t.duration = 1.0;
  const auto states = generate_trajectory(t, p);
  REQUIRE(states.size() == 15);
  for (std::size_t i = 1; i < states.size(); ++i) {
    CHECK(states[i][0] - states[i - 1][0] == doctest::Approx(0.5 / 15.0).epsilon(1e-9));
    CHECK(states[i][1] == doctest::Approx(1.0));
  }

  t.duration = 0.0667;
  CHECK(generate_trajectory(t, p).size() == 1);
  t.duration = 0.0;
  CHECK_THROWS_AS(generate_trajectory(t, p), InvalidSpec);
  t.duration = 1.0;
  t.area.x_max = t.area.x_min;
  CHECK_THROWS_AS(generate_trajectory(t, p), InvalidSpec);
}

TEST_CASE("random trajectories stay inside the area and under max speed") {
  RadarParams p;
  for (auto kind : {MotionKind::random_waypoint, MotionKind::sinusoidal_weave}) {
    for (std::uint64_t seed : {7u, 8u, 9u, 10u, 11u}) {
      TrajectorySpec t;
      t.kind = kind;
      t.seed = seed;
      t.duration = 10.0;
      const auto states = generate_trajectory(t, p);
      REQUIRE(states.size() == 150);
      for (std::size_t i = 0; i < states.size(); ++i) {
        const auto& s = states[i];
        CHECK(t.area.contains(s[0], s[1]));
        CHECK(std::hypot(s[2], s[3]) <= t.max_speed + 1e-9);
        if (i > 0) {
          // Velocity consistent with the finite difference within one frame.
          const double dt = p.frame_period();
          const double fdx = (s[0] - states[i - 1][0]) / dt;
          const double fdy = (s[1] - states[i - 1][1]) / dt;
          CHECK(std::abs(fdx - s[2]) <= t.max_speed);
          CHECK(std::abs(fdy - s[3]) <= t.max_speed);
          CHECK(std::hypot(fdx, fdy) <= t.max_speed + 1e-6);
        }
      }
      // Bit reproducible.
      CHECK(generate_trajectory(t, p) == states);
    }
  }
}

TEST_CASE("frame timestamps are spaced at the frame period") {
  SceneConfig config;
  TrajectorySpec t;
  t.duration = 2.0;
  EpisodeSimulator sim(RadarParams{}, config, t, 5);
  REQUIRE(sim.frame_count() == 30);
  for (std::size_t f = 1; f < sim.frame_count(); ++f) {
    CHECK(sim.timestamp(f) - sim.timestamp(f - 1) == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
  }
  const auto frame = sim.frame(3);
  CHECK(frame.timestamp == doctest::Approx(0.2));
}

TEST_CASE("point target peak lands at the predicted bins") {
  RadarParams p;
  const auto map = synthesize_rda(point_scene(0.0, 2.0, 0.0, 0.0), p, 1);
  CHECK(map.range_bins() == 134);
  CHECK(map.doppler_bins() == 64);
  CHECK(map.azimuth_bins() == 64);
  const auto peak = find_peak(map);
  CHECK(peak.range_bin == 53);
  CHECK(peak.doppler_bin == 32);
  CHECK(peak.azimuth_bin == 32);

  // One velocity resolution away from the radar moves the peak one bin.
  const double dv = p.velocity_resolution();
  const auto moving = find_peak(synthesize_rda(point_scene(0.0, 2.0, 0.0, dv), p, 1));
  CHECK(std::abs(moving.doppler_bin - 32) == 1);
}

TEST_CASE("peak recovery within one bin for random clutter-free targets") {
  RadarParams p;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(-2.0, 2.0), uy(1.0, 3.0), uv(-0.8, 0.8);
  for (int trial = 0; trial < 40; ++trial) {
    const double x = ux(rng), y = uy(rng);
    const double vx = uv(rng), vy = uv(rng);
    const auto map = synthesize_rda(point_scene(x, y, vx, vy), p, trial);
    const auto peak = find_peak(map);
    Scatterer s{x, y, vx, vy, 1.0};
    const auto bins = bin_position(polar_view(s), p);
    CHECK(std::abs(peak.range_bin - bins.range) <= 1.0);
    double da = std::abs(peak.azimuth_bin - bins.azimuth);
    da = std::min(da, 64.0 - da);
    CHECK(da <= 1.0);
  }
}

TEST_CASE("reference IF path agrees with direct synthesis") {
  RadarParams p;
  for (auto pos : {std::array<double, 4>{0.0, 2.0, 0.0, 0.0}, std::array<double, 4>{0.8, 2.4, 0.2, -0.3},
                   std::array<double, 4>{-1.2, 1.5, -0.4, 0.1}}) {
    const Scene scene = point_scene(pos[0], pos[1], pos[2], pos[3]);
    const auto full = synthesize_rda_if(scene, p, 1, false);
    CHECK(full.range_bins() == p.fast_time_samples);
    const auto if_peak = find_peak(crop_range(full, 134));
    const auto direct_peak = find_peak(synthesize_rda(scene, p, 1));
    CHECK(std::abs(if_peak.range_bin - direct_peak.range_bin) <= 1);
    CHECK(std::abs(if_peak.doppler_bin - direct_peak.doppler_bin) <= 1);
    int da = std::abs(if_peak.azimuth_bin - direct_peak.azimuth_bin);
    da = std::min(da, 64 - da);
    CHECK(da <= 1);
  }
}

TEST_CASE("noise-only map follows the exponential tail") {
  RadarParams p;
  Scene s;
  s.target_present = false;
  s.noise_floor = 0.05;
  std::size_t above = 0, total = 0;
  double sum = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    const auto map = synthesize_rda(s, p, 100 + trial);
    for (float v : map.power()) {
      CHECK_FALSE(v < 0.0f);
      sum += v;
      // mean + 6 sigma for an exponential with sigma = mean
      if (v > 7.0 * s.noise_floor) ++above;
      ++total;
    }
  }
  CHECK(sum / total == doctest::Approx(s.noise_floor).epsilon(0.01));
  const double expected = std::exp(-7.0) * total;
  CHECK(std::abs(above - expected) < 5.0 * std::sqrt(expected));
}

TEST_CASE("scene validation") {
  Scene s;
  s.noise_floor = 0.0;
  CHECK_THROWS_AS(s.validate(), InvalidSpec);
  s.noise_floor = 0.05;
  s.target_rcs = -1.0;
  CHECK_THROWS_AS(s.validate(), InvalidSpec);
  s.target_rcs = 1.0;
  s.clutter_points.push_back({1.0, 1.0, 0.0, 0.0, -2.0});
  CHECK_THROWS_AS(s.validate(), InvalidSpec);
}

TEST_CASE("crop_range") {
  RdaMap full(1024, 64, 64);
  full.at(133, 5, 6) = 2.0f;
  full.at(134, 5, 6) = 3.0f;
  const auto cropped = crop_range(full, 134);
  CHECK(cropped.range_bins() == 134);
  CHECK(cropped.at(133, 5, 6) == 2.0f);
  const auto same = crop_range(cropped, 134);
  CHECK(std::equal(same.power().begin(), same.power().end(), cropped.power().begin()));
  RdaMap small(100, 64, 64);
  CHECK_THROWS_AS(crop_range(small, 134), ShapeError);
}

TEST_CASE("projection: delta, uniform and zero maps") {
  RdaMap map(134, 64, 64);
  const auto zero = project_rda(map);
  CHECK(std::all_of(zero.rd.begin(), zero.rd.end(), [](float v) { return v == 0.0f; }));
  CHECK(std::all_of(zero.ra.begin(), zero.ra.end(), [](float v) { return v == 0.0f; }));

  map.at(10, 20, 30) = 5.0f;
  const auto delta = project_rda(map);
  for (int r = 0; r < 134; ++r) {
    for (int j = 0; j < 64; ++j) {
      CHECK(delta.rd[r * 64 + j] == ((r == 10 && j == 20) ? 1.0f : 0.0f));
      CHECK(delta.ra[r * 64 + j] == ((r == 10 && j == 30) ? 1.0f : 0.0f));
    }
  }

  std::fill(map.power().begin(), map.power().end(), 0.7f);
  const auto uniform = project_rda(map);
  for (float v : uniform.rd) CHECK(v == doctest::Approx(1.0f));
  for (float v : uniform.ra) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("projection matches the triple-loop oracle") {
  std::mt19937_64 rng(11);
  std::exponential_distribution<float> dist(2.0f);
  for (int trial = 0; trial < 3; ++trial) {
    RdaMap map(134, 64, 64);
    for (float& v : map.power()) v = dist(rng);
    const auto f = project_rda(map, 0.5);
    CHECK(f.timestamp == 0.5);
    std::vector<double> rd(134 * 64, 0.0), ra(134 * 64, 0.0);
    for (int i = 0; i < 134; ++i) {
      for (int j = 0; j < 64; ++j) {
        for (int k = 0; k < 64; ++k) {
          rd[i * 64 + j] += map.at(i, j, k);
          ra[i * 64 + k] += map.at(i, j, k);
        }
      }
    }
    const double rd_max = *std::max_element(rd.begin(), rd.end());
    const double ra_max = *std::max_element(ra.begin(), ra.end());
    float f_rd_max = 0.0f, f_ra_max = 0.0f;
    for (std::size_t i = 0; i < rd.size(); ++i) {
      CHECK(f.rd[i] == doctest::Approx(rd[i] / rd_max).epsilon(1e-5));
      CHECK(f.ra[i] == doctest::Approx(ra[i] / ra_max).epsilon(1e-5));
      CHECK(f.rd[i] >= 0.0f);
      CHECK(f.rd[i] <= 1.0f);
      CHECK(f.ra[i] >= 0.0f);
      CHECK(f.ra[i] <= 1.0f);
      f_rd_max = std::max(f_rd_max, f.rd[i]);
      f_ra_max = std::max(f_ra_max, f.ra[i]);
    }
    CHECK(f_rd_max == 1.0f);
    CHECK(f_ra_max == 1.0f);
  }
}

TEST_CASE("episode simulator dropouts and determinism") {
  SceneConfig config;
  config.dropout_probability = 0.05;
  TrajectorySpec t;
  t.duration = 200.0;
  t.seed = 3;
  EpisodeSimulator a(RadarParams{}, config, t, 99);
  const auto& dropped = a.dropped();
  const double rate = static_cast<double>(std::count(dropped.begin(), dropped.end(), true)) / dropped.size();
  CHECK(rate > 0.02);
  CHECK(rate < 0.09);
  for (const auto& c : a.clutter()) CHECK_FALSE(t.area.contains(c.x, c.y, config.clutter_margin));

  EpisodeSimulator b(RadarParams{}, config, t, 99);
  CHECK(a.states() == b.states());
  const auto fa = a.frame(17), fb = b.frame(17);
  CHECK(fa.rd == fb.rd);
  CHECK(fa.ra == fb.ra);
}

TEST_CASE("dataset round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "radartrack_test_dataset";
  fs::remove_all(dir);
  dataset::SimulationConfig config;
  config.seed = 4;
  config.groups = {{"train", MotionKind::random_waypoint, 1, 1.0}, {"test", MotionKind::sinusoidal_weave, 1, 0.5}};
  const auto meta = dataset::simulate_dataset(config, dir);
  REQUIRE(meta.episodes.size() == 2);
  const auto loaded = dataset::load_meta(dir);
  CHECK(loaded.episodes_in_split("train") == std::vector<std::size_t>{0});
  CHECK(loaded.episodes_in_split("test") == std::vector<std::size_t>{1});
  const auto ep = dataset::load_episode(dir, loaded, 0);
  REQUIRE(ep.frames() == 15);
  auto sim = dataset::make_simulator(loaded, 0);
  const auto f = sim.frame(4);
  CHECK(std::equal(f.rd.begin(), f.rd.end(), ep.rd_frame(4)));
  CHECK(std::equal(f.ra.begin(), f.ra.end(), ep.ra_frame(4)));
  for (int k = 0; k < 4; ++k) CHECK(ep.truth[4][k] == doctest::Approx(sim.states()[4][k]).epsilon(1e-6));

  const auto hash = dataset::dataset_hash(dir);
  const fs::path dir2 = dir.string() + "_b";
  fs::remove_all(dir2);
  dataset::simulate_dataset(config, dir2);
  CHECK(dataset::dataset_hash(dir2) == hash);

  // Truncated record
  const auto file = dir / loaded.episodes[0].file;
  fs::resize_file(file, fs::file_size(file) - 10);
  CHECK_THROWS(dataset::load_episode(dir, loaded, 0));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}
