#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include <doctest.h>

#include "gradcheck.hpp"
#include "radartrack/checkpoint.hpp"
#include "radartrack/mlcrnn.hpp"

using namespace radartrack;
using namespace radartrack::mlcrnn;

namespace {

struct Sequence {
  std::vector<std::vector<float>> rd, ra;
  std::vector<FrameView<float>> views;
};

Sequence random_sequence(const ModelConfig& c, int T, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Sequence s;
  s.rd.resize(static_cast<std::size_t>(T));
  s.ra.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    s.rd[t].resize(static_cast<std::size_t>(c.input_h * c.rd_w));
    s.ra[t].resize(static_cast<std::size_t>(c.input_h * c.ra_w));
    for (auto& v : s.rd[t]) v = u(rng);
    for (auto& v : s.ra[t]) v = u(rng);
  }
  for (int t = 0; t < T; ++t) s.views.push_back({s.rd[t], s.ra[t]});
  return s;
}

bool bit_equal(const HeadOutputs<float>& a, const HeadOutputs<float>& b) {
  return std::memcmp(a.x_hat.data(), b.x_hat.data(), sizeof(a.x_hat)) == 0 &&
         std::memcmp(a.alpha.data(), b.alpha.data(), sizeof(a.alpha)) == 0 &&
         std::memcmp(a.beta.data(), b.beta.data(), sizeof(a.beta)) == 0;
}

}  // namespace

TEST_CASE("parameter count") {
  MlCrnnModel<float> model;
  const ModelConfig& c = model.config();
  const std::size_t total = count_parameters(model);
  CHECK(total == closed_form_parameter_count(c));

  // Independent layer-by-layer sums.
  std::size_t conv = 0;
  int cin = 1;
  for (int cout : c.channels) {
    conv += 9 * cin * cout + cout;
    cin = cout;
  }
  CHECK(2 * conv == 4168);
  CHECK(model.features() == 288);
  const std::size_t fc = 288 * 16 + 16;
  const std::size_t gru = 3 * ((16 + 128) * 128 + 128);
  CHECK(gru == 55680);
  const std::size_t heads = (128 * 4 + 4) + (128 * 4 + 4) + (128 * 6 + 6);
  CHECK(heads == 1806);
  CHECK(total == 2 * conv + fc + gru + heads);
  CHECK(total == 66278);
  CHECK(std::abs(static_cast<double>(total) - 66730.0) / 66730.0 < 0.01);

  for (std::size_t i = 0; i < model.parameters().size(); ++i) CAPTURE(model.parameter_names()[i]);
  CHECK(model.parameter_names()[MlCrnnModel<float>::kGruW] == "gru.w");
}

TEST_CASE("conv shape trace") {
  MlCrnnModel<float> model;
  const int expect[4][3] = {{67, 32, 4}, {34, 16, 8}, {17, 8, 16}, {9, 4, 4}};
  for (int b = 0; b < 2; ++b) {
    for (int l = 0; l < 4; ++l) {
      const auto& g = model.geometry(b, l);
      CHECK(g.out_h == expect[l][0]);
      CHECK(g.out_w == expect[l][1]);
      CHECK(g.out_c == expect[l][2]);
    }
    CHECK(model.branch_features(b) == 144);
  }
  model.initialize(1);
  std::mt19937_64 rng(2);
  const auto seq = random_sequence(model.config(), 1, rng);
  ConvTrace<float> trace;
  CHECK(conv_features(model, seq.views[0], &trace).size() == 288);
  CHECK(trace.outputs[1][3].size() == 144);
  CHECK(conv_block(model, seq.views[0], nn::Mode::eval, 0).size() == 16);

  std::vector<float> wrong(10);
  CHECK_THROWS_AS(conv_block(model, FrameView<float>{wrong, seq.ra[0]}, nn::Mode::eval, 0), ShapeError);
}

TEST_CASE("conv block determinism") {
  MlCrnnModel<float> model;
  model.initialize(3);
  std::vector<float> zero_rd(134 * 64, 0.0f), zero_ra(134 * 64, 0.0f);
  const FrameView<float> zero{zero_rd, zero_ra};
  const auto a = conv_block(model, zero, nn::Mode::eval, 0);
  for (float v : a) CHECK(std::isfinite(v));
  CHECK(conv_block(model, zero, nn::Mode::eval, 99) == a);

  std::mt19937_64 rng(4);
  const auto seq = random_sequence(model.config(), 1, rng);
  CHECK(conv_block(model, seq.views[0], nn::Mode::eval, 1) == conv_block(model, seq.views[0], nn::Mode::eval, 2));
  CHECK(conv_block(model, seq.views[0], nn::Mode::mc, 1) == conv_block(model, seq.views[0], nn::Mode::mc, 1));
  CHECK(conv_block(model, seq.views[0], nn::Mode::mc, 1) != conv_block(model, seq.views[0], nn::Mode::mc, 2));
}

TEST_CASE("all-zero weights give bias-only heads") {
  MlCrnnModel<float> model;
  for (auto& p : model.parameters()) std::fill(p.values.begin(), p.values.end(), 0.0f);
  auto& bx = model.param(MlCrnnModel<float>::kHeadXBias).values;
  auto& ba = model.param(MlCrnnModel<float>::kHeadAlphaBias).values;
  auto& bb = model.param(MlCrnnModel<float>::kHeadBetaBias).values;
  bx = {0.1f, 2.0f, -0.3f, 0.4f};
  ba = {-1.0f, 0.0f, 0.5f, -2.0f};
  bb = {0.1f, -0.2f, 0.3f, 0.9f, -3.0f, 0.0f};
  std::mt19937_64 rng(5);
  const auto seq = random_sequence(model.config(), 4, rng);
  for (auto mode : {nn::Mode::eval, nn::Mode::train}) {
    const auto heads = forward_sequence<float>(model, seq.views, mode, 3);
    REQUIRE(heads.size() == 4);
    for (const auto& h : heads) {
      for (int k = 0; k < 4; ++k) {
        CHECK(h.x_hat[k] == bx[k]);
        CHECK(h.alpha[k] == doctest::Approx(std::exp(ba[k])));
      }
      for (int k = 0; k < 6; ++k) CHECK(h.beta[k] == doctest::Approx(std::tanh(bb[k])));
    }
  }
}

TEST_CASE("activation contract on extreme inputs") {
  MlCrnnModel<float> model;
  model.initialize(6);
  for (auto& v : model.param(MlCrnnModel<float>::kHeadAlphaWeight).values) v *= 50.0f;
  for (auto& v : model.param(MlCrnnModel<float>::kHeadBetaWeight).values) v *= 50.0f;
  std::mt19937_64 rng(7);
  const auto seq = random_sequence(model.config(), 6, rng);
  for (auto mode : {nn::Mode::eval, nn::Mode::mc}) {
    for (const auto& h : forward_sequence<float>(model, seq.views, mode, 1)) {
      for (float a : h.alpha) CHECK(a > 0.0f);
      for (float b : h.beta) CHECK(std::abs(b) <= 1.0f);
      for (float x : h.x_hat) CHECK(std::isfinite(x));
    }
  }
}

TEST_CASE("streaming equals batched forward bit for bit") {
  MlCrnnModel<float> model;
  model.initialize(8);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 1 + trial % 10;
    const auto seq = random_sequence(model.config(), T, rng);
    const auto batch = forward_sequence<float>(model, seq.views, nn::Mode::eval, 0);
    auto state = make_stream_state(model, 1, nn::Mode::eval, 0);
    for (int t = 0; t < T; ++t) {
      const auto out = stream_step(model, state, seq.views[static_cast<std::size_t>(t)]);
      REQUIRE(out.size() == 1);
      CHECK(bit_equal(out[0], batch[static_cast<std::size_t>(t)]));
    }
    CHECK(state.frame_index == static_cast<std::size_t>(T));
  }
}

TEST_CASE("Monte-Carlo replicas") {
  MlCrnnModel<float> model;
  model.initialize(10);
  std::mt19937_64 rng(11);
  const auto seq = random_sequence(model.config(), 3, rng);
  auto state = make_stream_state(model, 25, nn::Mode::mc, 5);
  CHECK(state.replicas() == 25);
  std::vector<HeadOutputs<float>> out;
  for (const auto& f : seq.views) out = stream_step(model, state, f);
  CHECK(out.size() == 25);
  CHECK(state.hidden[0] != state.hidden[1]);
  CHECK_FALSE(bit_equal(out[0], out[1]));

  // Same seed, same replicas.
  auto again = make_stream_state(model, 25, nn::Mode::mc, 5);
  std::vector<HeadOutputs<float>> out2;
  for (const auto& f : seq.views) out2 = stream_step(model, again, f);
  for (std::size_t r = 0; r < 25; ++r) CHECK(bit_equal(out[r], out2[r]));

  CHECK_THROWS_AS(make_stream_state(model, 0, nn::Mode::mc, 5), InvalidSpec);
}

TEST_CASE("configuration errors") {
  ModelConfig c;
  c.hidden = 0;
  CHECK_THROWS_AS(MlCrnnModel<float>{c}, InvalidSpec);
  c = {};
  c.fc_dropout = 1.0;
  CHECK_THROWS_AS(MlCrnnModel<float>{c}, InvalidSpec);
  MlCrnnModel<float> model;
  CHECK_THROWS_AS(forward_sequence<float>(model, {}, nn::Mode::eval, 0), InvalidSpec);
}

TEST_CASE("initialization bounds") {
  MlCrnnModel<double> model;
  model.initialize(12);
  const auto& names = model.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& p = model.param(i);
    if (names[i].find("bias") != std::string::npos || names[i] == "gru.b") {
      for (double v : p.values) CHECK(v == 0.0);
      continue;
    }
    // kernels are 3x3xCinxCout, dense weights out x in
    const double fan_in = p.rank() == 4 ? 9.0 * p.dim(2) : static_cast<double>(p.dim(1));
    const double limit = 1.0 / std::sqrt(fan_in);
    double lo = 0, hi = 0;
    for (double v : p.values) {
      CHECK(std::abs(v) <= limit);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (p.size() > 30) {
      CHECK(hi > 0.5 * limit);
      CHECK(lo < -0.5 * limit);
    }
  }
}

TEST_CASE("end-to-end gradient on an 8x8 model") {
  namespace m = radartrack::mlcrnn;
  m::ModelConfig config;
  config.input_h = 8;
  config.rd_w = 8;
  config.ra_w = 8;
  config.obs_dim = 6;
  config.hidden = 8;
  m::MlCrnnModel<double> model(config);
  model.initialize(21);
  std::mt19937_64 rng(22);
  const int T = 5;
  std::vector<std::vector<double>> rd(T), ra(T);
  std::vector<m::FrameView<double>> frames;
  std::vector<State> truth(T);
  for (int t = 0; t < T; ++t) {
    rd[t] = gradcheck::random_vector(64, rng, 0.0, 1.0);
    ra[t] = gradcheck::random_vector(64, rng, 0.0, 1.0);
    for (auto& v : truth[t]) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  for (int t = 0; t < T; ++t) frames.push_back({rd[t], ra[t]});
  auto loss = [&] {
    const auto heads = m::forward_sequence<double>(model, frames, nn::Mode::train, 4);
    return training::window_loss<double>(heads, truth, training::Loss::ml, 1.0, nullptr);
  };
  model.zero_grad();
  m::SequenceTrace<double> trace;
  const auto heads = m::forward_sequence<double>(model, frames, nn::Mode::train, 4, &trace);
  std::vector<m::HeadGradient<double>> d;
  training::window_loss<double>(heads, truth, training::Loss::ml, 1.0, &d);
  m::backward_sequence<double>(model, trace, d);
  std::vector<gradcheck::Slot> slots;
  for (auto& p : model.parameters()) slots.push_back({&p.values, &p.grad});
  const auto r = gradcheck::check("8x8", slots, loss, 200, 23);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("mse loss leaves the covariance heads without gradient") {
  ModelConfig config;
  config.input_h = 8;
  config.rd_w = 8;
  config.ra_w = 8;
  MlCrnnModel<float> model(config);
  model.initialize(30);
  std::mt19937_64 rng(31);
  const auto seq = random_sequence(config, 4, rng);
  std::vector<State> truth(4, State{0.1, 2.0, 0.0, 0.3});
  model.zero_grad();
  SequenceTrace<float> trace;
  const auto heads = forward_sequence<float>(model, seq.views, nn::Mode::train, 1, &trace);
  std::vector<HeadGradient<float>> d;
  training::window_loss<float>(heads, truth, training::Loss::mse, 1.0, &d);
  backward_sequence<float>(model, trace, d);
  for (auto idx : {MlCrnnModel<float>::kHeadAlphaWeight, MlCrnnModel<float>::kHeadAlphaBias,
                   MlCrnnModel<float>::kHeadBetaWeight, MlCrnnModel<float>::kHeadBetaBias}) {
    for (float g : model.param(idx).grad) CHECK(g == 0.0f);
  }
  double norm = 0.0;
  for (float g : model.param(MlCrnnModel<float>::kHeadXWeight).grad) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "radartrack_test_ckpt";
  fs::remove_all(dir);
  MlCrnnModel<float> model;
  model.initialize(40);
  checkpoint::CheckpointInfo info{40, "ml", "abc", "def", 3};
  checkpoint::save(dir, model, info);
  const auto loaded = checkpoint::load(dir);
  CHECK(loaded.info.seed == 40);
  CHECK(loaded.info.loss == "ml");
  CHECK(loaded.info.dataset_hash == "abc");
  CHECK(loaded.info.epochs == 3);
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    CHECK(loaded.model.param(i).values == model.param(i).values);
  }
  CHECK(checkpoint::weights_hash(dir).size() == 16);
  const auto h = checkpoint::weights_hash(dir);
  checkpoint::save(dir, loaded.model, loaded.info);
  CHECK(checkpoint::weights_hash(dir) == h);

  // Wrong blob size.
  fs::resize_file(dir / "params.bin", fs::file_size(dir / "params.bin") - 4);
  CHECK_THROWS_AS(checkpoint::load(dir), InvalidSpec);

  // Different architecture.
  ModelConfig small;
  small.hidden = 32;
  MlCrnnModel<float> other(small);
  other.initialize(1);
  checkpoint::save(dir, other, info);
  const auto reloaded = checkpoint::load(dir);
  CHECK(reloaded.model.config().hidden == 32);

  // Config edited behind the hash's back.
  auto meta = dataset::read_json_file(dir / "meta.json");
  meta["config"]["hidden"] = 64;
  dataset::write_json_file(dir / "meta.json", meta);
  CHECK_THROWS_AS(checkpoint::load(dir), InvalidSpec);
  fs::remove_all(dir);
}
