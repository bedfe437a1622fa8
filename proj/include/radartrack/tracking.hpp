#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "radartrack/baseline.hpp"
#include "radartrack/dataset.hpp"
#include "radartrack/evaluation.hpp"
#include "radartrack/mlcrnn.hpp"

namespace radartrack::tracking {

struct TrackOptions {
  int mc_samples = 25;
  std::uint64_t seed = 11;
};

/// One network run logged three ways: the fused estimate with the total,
/// aleatoric-only and epistemic-only covariance.
struct NetworkLogs {
  evaluation::TrackLog total;
  evaluation::TrackLog aleatoric;
  evaluation::TrackLog epistemic;
};

/// Streams every frame of the given episodes through the network with
/// mc_samples dropout replicas (eval mode when mc_samples == 1) and fuses
/// the replicas. The hidden state is reset at each episode start. `missed`
/// marks frames in which the target was not visible.
NetworkLogs track_network(const mlcrnn::MlCrnnModel<float>& model, const std::filesystem::path& data_dir,
                          const dataset::DatasetMeta& meta, std::span<const std::size_t> episodes,
                          const TrackOptions& options, const std::string& method);

/// Detections from regenerated RDA maps followed by the UKF.
evaluation::TrackLog track_ukf(const baseline::TrackerParams& params, const dataset::DatasetMeta& meta,
                               std::span<const std::size_t> episodes, const std::string& method = "UKF");

/// Tuning data for the given episodes; maps are regenerated on demand.
baseline::TuningData tuning_data(const dataset::DatasetMeta& meta, std::span<const std::size_t> episodes);

}  // namespace radartrack::tracking
