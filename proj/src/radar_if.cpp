#include <fftw3.h>

#include <cmath>
#include <complex>
#include <numeric>
#include <random>

#include "radartrack/radar_sim.hpp"

namespace radartrack::radar_sim {

namespace {

using cplx = std::complex<double>;

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

double sum(const std::vector<double>& w) { return std::accumulate(w.begin(), w.end(), 0.0); }
double sum_sq(const std::vector<double>& w) {
  return std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
}

class FftPlan {
 public:
  FftPlan(int n, int howmany, fftw_complex* in, fftw_complex* out, int in_stride, int in_dist,
          int out_stride, int out_dist) {
    plan_ = fftw_plan_many_dft(1, &n, howmany, in, nullptr, in_stride, in_dist, out, nullptr,
                               out_stride, out_dist, FFTW_FORWARD, FFTW_ESTIMATE);
    if (plan_ == nullptr) throw NumericError("FFTW planning failed");
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  ~FftPlan() { fftw_destroy_plan(plan_); }
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

RdaMap synthesize_rda_if(const Scene& scene, const RadarParams& params, std::uint64_t seed,
                         bool add_noise) {
  params.validate();
  scene.validate();
  const int N = params.fast_time_samples;
  const int P = params.chirps_per_frame;
  const int G = params.rx_antennas;
  const int D = params.doppler_bins;
  const int A = params.azimuth_bins;
  const double lambda = params.wavelength();
  const double slope = params.bandwidth() / params.chirp_duration;
  const double fs = N / params.chirp_duration;

  const auto w_range = hann(N);
  const auto w_doppler = hann(P);
  const std::vector<double> w_array(static_cast<std::size_t>(G), 1.0);
  const double gain = sum(w_range) * sum(w_doppler) * sum(w_array);

  std::vector<Scatterer> scatterers = target_scatterers(scene, derive_seed(seed, 1));
  scatterers.insert(scatterers.end(), scene.clutter_points.begin(), scene.clutter_points.end());

  // signal[(g * P + p) * N + n]
  std::vector<cplx> signal(static_cast<std::size_t>(G) * P * N, cplx(0.0, 0.0));
  std::mt19937_64 rng(derive_seed(seed, 2));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::vector<cplx> e_range(static_cast<std::size_t>(N));
  for (const auto& s : scatterers) {
    const PolarView v = polar_view(s);
    if (v.range < 1e-3 || s.reflectivity <= 0.0) continue;
    const double r = std::max(v.range, 0.1);
    const double amp = std::sqrt(s.reflectivity / (r * r * r * r));
    const double beat = 2.0 * slope * v.range / kSpeedOfLight;
    const double doppler = 2.0 * v.radial_velocity / lambda;
    const double spatial = params.spacing() * v.sin_azimuth / lambda;
    const cplx start = std::polar(amp, phase(rng));
    for (int n = 0; n < N; ++n) e_range[static_cast<std::size_t>(n)] = std::polar(1.0, 2.0 * kPi * beat * n / fs);
    for (int g = 0; g < G; ++g) {
      for (int p = 0; p < P; ++p) {
        const cplx c = start * std::polar(1.0, 2.0 * kPi * (doppler * p * params.chirp_period + spatial * g));
        cplx* row = &signal[(static_cast<std::size_t>(g) * P + p) * N];
        for (int n = 0; n < N; ++n) row[n] += c * e_range[static_cast<std::size_t>(n)];
      }
    }
  }
  if (add_noise) {
    const double noise_gain = sum_sq(w_range) * sum_sq(w_doppler) * sum_sq(w_array) / (gain * gain);
    const double sigma = std::sqrt(0.5 * scene.noise_floor / noise_gain);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (auto& v : signal) v += cplx(gauss(rng), gauss(rng));
  }
  for (int g = 0; g < G; ++g) {
    for (int p = 0; p < P; ++p) {
      cplx* row = &signal[(static_cast<std::size_t>(g) * P + p) * N];
      const double wdp = w_doppler[static_cast<std::size_t>(p)] * w_array[static_cast<std::size_t>(g)];
      for (int n = 0; n < N; ++n) row[n] *= w_range[static_cast<std::size_t>(n)] * wdp;
    }
  }

  // Fast-time DFT, in place over every (antenna, chirp) row.
  {
    FftPlan plan(N, G * P, as_fftw(signal.data()), as_fftw(signal.data()), 1, N, 1, N);
    plan.execute();
  }
  // Slow-time DFT across chirps for every (antenna, range bin).
  std::vector<cplx> doppler_out(static_cast<std::size_t>(G) * P * N);
  for (int g = 0; g < G; ++g) {
    cplx* in = &signal[static_cast<std::size_t>(g) * P * N];
    cplx* out = &doppler_out[static_cast<std::size_t>(g) * P * N];
    FftPlan plan(P, N, as_fftw(in), as_fftw(out), N, 1, N, 1);
    plan.execute();
  }
  signal.clear();
  signal.shrink_to_fit();

  // Spatial DFT, zero-padded to A bins, for every kept (range, Doppler) cell.
  RdaMap map(N, D, A);
  std::vector<cplx> array_in(static_cast<std::size_t>(A)), array_out(static_cast<std::size_t>(A));
  FftPlan plan(A, 1, as_fftw(array_in.data()), as_fftw(array_out.data()), 1, A, 1, A);
  for (int n = 0; n < N; ++n) {
    for (int j = 0; j < D; ++j) {
      const int m = ((j - D / 2) % P + P) % P;  // kept bin -> spectrum index
      std::fill(array_in.begin(), array_in.end(), cplx(0.0, 0.0));
      for (int g = 0; g < G; ++g) {
        array_in[static_cast<std::size_t>(g)] = doppler_out[(static_cast<std::size_t>(g) * P + m) * N + n];
      }
      plan.execute();
      for (int k = 0; k < A; ++k) {
        const int src = ((k - A / 2) % A + A) % A;
        map.at(n, j, k) = static_cast<float>(std::norm(array_out[static_cast<std::size_t>(src)]) / (gain * gain));
      }
    }
  }
  return map;
}

}  // namespace radartrack::radar_sim
