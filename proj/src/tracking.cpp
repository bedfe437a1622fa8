#include "radartrack/tracking.hpp"

#include <memory>

#include "radartrack/uncertainty.hpp"

namespace radartrack::tracking {

using evaluation::TrackLog;
using evaluation::TrackRow;

NetworkLogs track_network(const mlcrnn::MlCrnnModel<float>& model, const std::filesystem::path& data_dir,
                          const dataset::DatasetMeta& meta, std::span<const std::size_t> episodes,
                          const TrackOptions& options, const std::string& method) {
  if (options.mc_samples < 1) throw InvalidSpec("track: mc samples must be >= 1");
  const nn::Mode mode = options.mc_samples == 1 ? nn::Mode::eval : nn::Mode::mc;
  NetworkLogs logs;
  logs.total.method = method;
  logs.aleatoric.method = method + "_aleatoric";
  logs.epistemic.method = method + "_epistemic";
  std::vector<uncertainty::McSample> samples(static_cast<std::size_t>(options.mc_samples));
  for (std::size_t e : episodes) {
    const dataset::EpisodeData ep = dataset::load_episode(data_dir, meta, e);
    const auto dropped = dataset::make_simulator(meta, e).dropped();
    auto state = mlcrnn::make_stream_state(model, options.mc_samples, mode, derive_seed(options.seed, e));
    for (std::size_t f = 0; f < ep.frames(); ++f) {
      const mlcrnn::FrameView<float> frame{{ep.rd_frame(f), ep.rd_size}, {ep.ra_frame(f), ep.ra_size}};
      const auto heads = mlcrnn::stream_step(model, state, frame);
      for (std::size_t m = 0; m < heads.size(); ++m) {
        uncertainty::Vec4 x_hat, alpha;
        uncertainty::Vec6 beta;
        for (int k = 0; k < 4; ++k) {
          x_hat(k) = heads[m].x_hat[static_cast<std::size_t>(k)];
          alpha(k) = heads[m].alpha[static_cast<std::size_t>(k)];
        }
        for (int k = 0; k < 6; ++k) beta(k) = heads[m].beta[static_cast<std::size_t>(k)];
        if (!x_hat.allFinite() || !alpha.allFinite() || !beta.allFinite()) {
          throw NumericError("track: non-finite network output");
        }
        samples[m].x_hat = x_hat;
        samples[m].aleatoric = uncertainty::build_covariance(alpha, beta).sigma;
      }
      const auto fused = uncertainty::fuse_mc_samples(samples);
      TrackRow row;
      row.episode = static_cast<int>(e);
      row.frame = static_cast<int>(f);
      row.timestamp = ep.timestamps[f];
      row.truth = ep.truth[f];
      for (int k = 0; k < 4; ++k) row.estimate[static_cast<std::size_t>(k)] = fused.mean(k);
      row.missed = f < dropped.size() && dropped[f];
      row.covariance = fused.covariance.total;
      logs.total.rows.push_back(row);
      row.covariance = fused.covariance.aleatoric;
      logs.aleatoric.rows.push_back(row);
      row.covariance = fused.covariance.epistemic;
      logs.epistemic.rows.push_back(row);
    }
  }
  return logs;
}

baseline::TuningData tuning_data(const dataset::DatasetMeta& meta, std::span<const std::size_t> episodes) {
  baseline::TuningData data;
  data.radar = meta.radar;
  std::vector<std::size_t> ids(episodes.begin(), episodes.end());
  for (std::size_t e : ids) {
    const auto sim = dataset::make_simulator(meta, e);
    std::vector<double> ts;
    for (std::size_t f = 0; f < sim.frame_count(); ++f) ts.push_back(sim.timestamp(f));
    data.timestamps.push_back(std::move(ts));
    data.truth.push_back(sim.states());
  }
  // One simulator per episode is rebuilt lazily; maps depend only on
  // (episode, frame).
  auto cache = std::make_shared<std::pair<std::size_t, std::unique_ptr<radar_sim::EpisodeSimulator>>>();
  data.maps = [meta, ids, cache](std::size_t episode, std::size_t frame) {
    const std::size_t id = ids.at(episode);
    if (!cache->second || cache->first != id) {
      cache->second = std::make_unique<radar_sim::EpisodeSimulator>(dataset::make_simulator(meta, id));
      cache->first = id;
    }
    return cache->second->rda(frame);
  };
  return data;
}

evaluation::TrackLog track_ukf(const baseline::TrackerParams& params, const dataset::DatasetMeta& meta,
                               std::span<const std::size_t> episodes, const std::string& method) {
  params.validate();
  TrackLog log;
  log.method = method;
  for (std::size_t e : episodes) {
    const auto sim = dataset::make_simulator(meta, e);
    std::vector<double> ts;
    std::vector<std::vector<baseline::Detection>> dets;
    for (std::size_t f = 0; f < sim.frame_count(); ++f) {
      ts.push_back(sim.timestamp(f));
      dets.push_back(baseline::extract_detections(sim.rda(f), meta.radar, params.detection));
    }
    auto rows = baseline::run_tracker(ts, sim.states(), dets, params, static_cast<int>(e));
    log.rows.insert(log.rows.end(), rows.begin(), rows.end());
  }
  return log;
}

}  // namespace radartrack::tracking
