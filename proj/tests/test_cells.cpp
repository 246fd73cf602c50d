#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tbptt/cells.hpp"
#include "tbptt/checkpoint.hpp"

using namespace tbptt;

namespace {

void fill_uniform(Matrix& m, SeededRng& rng, double scale = 1.0) {
  for (double& v : m.data) v = rng.uniform(-scale, scale);
}

void fill_uniform(Vector& v, SeededRng& rng, double scale = 1.0) {
  for (double& x : v) x = rng.uniform(-scale, scale);
}

SimpleRnnParams random_simple(int d_h, int d_in, SeededRng& rng) {
  SimpleRnnParams p;
  p.w = Matrix(d_h, d_h);
  p.u = Matrix(d_h, d_in);
  p.b.assign(d_h, 0.0);
  fill_uniform(p.w, rng);
  fill_uniform(p.u, rng);
  fill_uniform(p.b, rng);
  return p;
}

LstmParams random_lstm(int d_h, int d_in, SeededRng& rng) {
  LstmParams p;
  for (Matrix* w : {&p.wf, &p.wi, &p.wo, &p.wz}) {
    *w = Matrix(d_h, d_h);
    fill_uniform(*w, rng);
  }
  for (Matrix* u : {&p.uf, &p.ui, &p.uo, &p.uz}) {
    *u = Matrix(d_h, d_in);
    fill_uniform(*u, rng);
  }
  for (Vector* b : {&p.bf, &p.bi, &p.bo, &p.bz}) {
    b->assign(d_h, 0.0);
    fill_uniform(*b, rng);
  }
  return p;
}

// Scalar-loop reference for the simple cell.
Vector simple_oracle(const SimpleRnnParams& p, const Vector& h, const Vector& x) {
  Vector out(p.hidden_dim());
  for (int i = 0; i < p.hidden_dim(); ++i) {
    double acc = p.b[i];
    for (int j = 0; j < p.w.cols; ++j) acc += p.w(i, j) * h[j];
    for (int j = 0; j < p.u.cols; ++j) acc += p.u(i, j) * x[j];
    out[i] = p.act == Activation::Tanh ? std::tanh(acc) : acc;
  }
  return out;
}

// Scalar-loop reference for the gated cell.
LstmStepResult lstm_oracle(const LstmParams& p, const Vector& c, const Vector& h,
                           const Vector& x) {
  const int d = p.hidden_dim();
  auto preact = [&](const Matrix& w, const Matrix& u, const Vector& b, int i) {
    double acc = b[i];
    for (int j = 0; j < w.cols; ++j) acc += w(i, j) * h[j];
    for (int j = 0; j < u.cols; ++j) acc += u(i, j) * x[j];
    return acc;
  };
  LstmStepResult r;
  r.c.resize(d);
  r.h.resize(d);
  for (int i = 0; i < d; ++i) {
    const double f = 1.0 / (1.0 + std::exp(-preact(p.wf, p.uf, p.bf, i)));
    const double gi = 1.0 / (1.0 + std::exp(-preact(p.wi, p.ui, p.bi, i)));
    const double o = 1.0 / (1.0 + std::exp(-preact(p.wo, p.uo, p.bo, i)));
    const double z = std::tanh(preact(p.wz, p.uz, p.bz, i));
    r.c[i] = gi * z + f * c[i];
    r.h[i] = o * std::tanh(r.c[i]);
  }
  return r;
}

ModelParams small_model(ModelConfig::Cell cell, int layers, int hidden, int emb, int vocab,
                        uint64_t seed) {
  ModelConfig cfg;
  cfg.cell = cell;
  cfg.num_layers = layers;
  cfg.hidden_dim = hidden;
  cfg.emb_dim = emb;
  cfg.vocab = vocab;
  SeededRng rng(seed);
  return make_model(cfg, rng);
}

std::vector<int> random_tokens(int n, int vocab, SeededRng& rng) {
  std::vector<int> t(n);
  for (int& v : t) v = rng.uniform_int(vocab);
  return t;
}

}  // namespace

TEST_CASE("simple_rnn_step zero parameters") {
  SimpleRnnParams p;
  p.w = Matrix(3, 3);
  p.u = Matrix(3, 2);
  p.b.assign(3, 0.0);
  Vector h{0.4, -0.2, 1.0};
  Vector x{1.0, 1.0};
  Vector out = simple_rnn_step(p, h, x);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("simple_rnn_step nilpotent W with identity input map") {
  // W strictly upper triangular (W^2 = 0), U = I, h = 0, x = e1.
  SimpleRnnParams p;
  p.w = Matrix(2, 2);
  p.w(0, 1) = 7.5;
  p.u = Matrix::identity(2);
  p.b.assign(2, 0.0);
  Vector out = simple_rnn_step(p, Vector{0.0, 0.0}, Vector{1.0, 0.0});
  CHECK(out[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  CHECK(out[1] == 0.0);
}

TEST_CASE("simple_rnn_step matches scalar-loop oracle") {
  SeededRng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    SimpleRnnParams p = random_simple(3, 3, rng);
    Vector h(3), x(3);
    fill_uniform(h, rng);
    fill_uniform(x, rng);
    Vector got = simple_rnn_step(p, h, x);
    Vector want = simple_oracle(p, h, x);
    for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("simple_rnn_step rejects shape mismatch") {
  SeededRng rng(22);
  SimpleRnnParams p = random_simple(3, 2, rng);
  CHECK_THROWS_AS(simple_rnn_step(p, Vector{1.0, 2.0}, Vector{1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("lstm_step zero parameters") {
  LstmParams p;
  for (Matrix* w : {&p.wf, &p.wi, &p.wo, &p.wz}) *w = Matrix(2, 2);
  for (Matrix* u : {&p.uf, &p.ui, &p.uo, &p.uz}) *u = Matrix(2, 2);
  for (Vector* b : {&p.bf, &p.bi, &p.bo, &p.bz}) b->assign(2, 0.0);

  SUBCASE("unit cell state halves through the forget gate") {
    LstmTapeEntry tape;
    auto r = lstm_step(p, Vector{1.0, 1.0}, Vector{0.0, 0.0}, Vector{0.0, 0.0}, &tape);
    for (int i = 0; i < 2; ++i) {
      CHECK(tape.f[i] == doctest::Approx(0.5));
      CHECK(tape.i[i] == doctest::Approx(0.5));
      CHECK(tape.o[i] == doctest::Approx(0.5));
      CHECK(tape.z[i] == doctest::Approx(0.0));
      CHECK(r.c[i] == doctest::Approx(0.5));
      CHECK(r.h[i] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
    }
  }

  SUBCASE("zero cell state stays zero") {
    auto r = lstm_step(p, Vector{0.0, 0.0}, Vector{0.0, 0.0}, Vector{0.0, 0.0});
    for (int i = 0; i < 2; ++i) {
      CHECK(r.c[i] == 0.0);
      CHECK(r.h[i] == 0.0);
    }
  }
}

TEST_CASE("lstm_step matches scalar-loop oracle") {
  SeededRng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    LstmParams p = random_lstm(2, 2, rng);
    Vector c(2), h(2), x(2);
    fill_uniform(c, rng);
    fill_uniform(h, rng);
    fill_uniform(x, rng);
    auto got = lstm_step(p, c, h, x);
    auto want = lstm_oracle(p, c, h, x);
    for (int i = 0; i < 2; ++i) {
      CHECK(got.c[i] == doctest::Approx(want.c[i]).epsilon(1e-12));
      CHECK(got.h[i] == doctest::Approx(want.h[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward_window with zero weights gives log-vocab loss") {
  ModelParams m = small_model(ModelConfig::Cell::Lstm, 2, 4, 3, 5, 31);
  for (auto& view : tensor_views(m)) std::fill(view.data, view.data + view.size(), 0.0);

  HiddenStates state = zero_state(m);
  std::vector<int> tokens{0, 1, 2, 3, 4, 0, 2};
  std::vector<int> targets{1, 2, 3, 4, 0, 2, 1};
  WindowResult r = forward_window(m, state, tokens, targets, nullptr);
  for (double loss : r.losses) {
    CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
}

TEST_CASE("forward_step equals manual embed/cell/head composition") {
  ModelParams m = small_model(ModelConfig::Cell::Lstm, 1, 3, 2, 4, 33);
  HiddenStates state = zero_state(m);
  const int token = 2, target = 1;
  const double loss = forward_step(m, state, token, target, nullptr);

  Vector x(m.embedding.row(token), m.embedding.row(token) + m.emb_dim());
  auto r = lstm_oracle(std::get<LstmParams>(m.layers[0]), Vector(3, 0.0), Vector(3, 0.0), x);
  Vector logits = affine(m.out_w, r.h, m.out_b);
  CHECK(loss == doctest::Approx(softmax_xent(logits, target).loss).epsilon(1e-14));
  for (int i = 0; i < 3; ++i) {
    CHECK(state.layers[0].h[i] == doctest::Approx(r.h[i]).epsilon(1e-14));
    CHECK(state.layers[0].c[i] == doctest::Approx(r.c[i]).epsilon(1e-14));
  }
}

TEST_CASE("forward_window rejects out-of-vocabulary tokens") {
  ModelParams m = small_model(ModelConfig::Cell::Lstm, 1, 3, 2, 4, 34);
  HiddenStates state = zero_state(m);
  std::vector<int> tokens{4};
  std::vector<int> targets{0};
  CHECK_THROWS_AS(forward_window(m, state, tokens, targets, nullptr), std::invalid_argument);
}

TEST_CASE("state carryover: any split point reproduces the unsplit pass") {
  SeededRng rng(35);
  ModelParams m = small_model(ModelConfig::Cell::Lstm, 2, 4, 3, 6, 36);
  const int len = 24;
  std::vector<int> tokens = random_tokens(len, 6, rng);
  std::vector<int> targets = random_tokens(len, 6, rng);

  HiddenStates full_state = zero_state(m);
  WindowResult full = forward_window(m, full_state, tokens, targets, nullptr);

  for (int split : {1, 7, 12, 23}) {
    HiddenStates state = zero_state(m);
    WindowResult a = forward_window(
        m, state, std::span<const int>(tokens).first(split),
        std::span<const int>(targets).first(split), nullptr);
    WindowResult b = forward_window(
        m, state, std::span<const int>(tokens).subspan(split),
        std::span<const int>(targets).subspan(split), nullptr);

    for (int t = 0; t < len; ++t) {
      const double got = t < split ? a.losses[t] : b.losses[t - split];
      CHECK(got == doctest::Approx(full.losses[t]).epsilon(1e-12));
    }
    for (size_t l = 0; l < full_state.layers.size(); ++l) {
      for (int i = 0; i < 4; ++i) {
        CHECK(state.layers[l].h[i] ==
              doctest::Approx(full_state.layers[l].h[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("gates stay in (0,1), tanh outputs in (-1,1)") {
  SeededRng rng(37);
  ModelParams m = small_model(ModelConfig::Cell::Lstm, 2, 4, 3, 6, 38);
  std::vector<int> tokens = random_tokens(40, 6, rng);
  std::vector<int> targets = random_tokens(40, 6, rng);
  HiddenStates state = zero_state(m);
  Tape tape;
  forward_window(m, state, tokens, targets, &tape);
  for (const auto& step : tape) {
    for (const auto& layer : step.layers) {
      const auto& e = std::get<LstmTapeEntry>(layer);
      for (int i = 0; i < 4; ++i) {
        for (const Vector* gate : {&e.f, &e.i, &e.o}) {
          CHECK((*gate)[i] > 0.0);
          CHECK((*gate)[i] < 1.0);
        }
        CHECK(e.z[i] > -1.0);
        CHECK(e.z[i] < 1.0);
        CHECK(e.tanh_c[i] > -1.0);
        CHECK(e.tanh_c[i] < 1.0);
      }
    }
  }
}

TEST_CASE("contraction fixture: scaled spectral norm bounds state distances") {
  SeededRng rng(39);
  SimpleRnnParams p = random_simple(5, 3, rng);
  const double lambda = 0.5;
  scale_spectral_norm(p.w, lambda);
  CHECK(spectral_norm_estimate(p.w) == doctest::Approx(lambda).epsilon(1e-6));

  for (int trial = 0; trial < 50; ++trial) {
    Vector h1(5), h2(5), x(3);
    fill_uniform(h1, rng, 2.0);
    fill_uniform(h2, rng, 2.0);
    fill_uniform(x, rng, 2.0);
    Vector o1 = simple_rnn_step(p, h1, x);
    Vector o2 = simple_rnn_step(p, h2, x);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 5; ++i) {
      num += (o1[i] - o2[i]) * (o1[i] - o2[i]);
      den += (h1[i] - h2[i]) * (h1[i] - h2[i]);
    }
    CHECK(std::sqrt(num) <= lambda * std::sqrt(den) + 1e-12);
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  ModelParams m = small_model(ModelConfig::Cell::Lstm, 2, 5, 3, 7, 41);
  // Mix in values with awkward decimal representations.
  auto views = tensor_views(m);
  views[0].data[0] = 0.1 + 0.2;
  views[1].data[1] = -1.0 / 3.0;

  const auto dir = std::filesystem::temp_directory_path() / "tbptt_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(path, m);
  ModelParams loaded = load_checkpoint(path);

  auto a = tensor_views(m);
  auto b = tensor_views(loaded);
  REQUIRE(a.size() == b.size());
  for (size_t t = 0; t < a.size(); ++t) {
    REQUIRE(a[t].size() == b[t].size());
    for (size_t i = 0; i < a[t].size(); ++i) CHECK(a[t].data[i] == b[t].data[i]);
  }

  // Re-saving the loaded model reproduces the file byte for byte.
  const std::string path2 = (dir / "model2.ckpt").string();
  save_checkpoint(path2, loaded);
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  // Mixed stacks round-trip too.
  ModelParams mixed = small_model(ModelConfig::Cell::SimpleIdentity, 1, 3, 2, 4, 42);
  const std::string path3 = (dir / "mixed.ckpt").string();
  save_checkpoint(path3, mixed);
  ModelParams mixed_loaded = load_checkpoint(path3);
  CHECK(std::get<SimpleRnnParams>(mixed_loaded.layers[0]).act == Activation::Identity);
}

TEST_CASE("make_model is deterministic in the seed") {
  ModelParams a = small_model(ModelConfig::Cell::Lstm, 2, 4, 3, 5, 77);
  ModelParams b = small_model(ModelConfig::Cell::Lstm, 2, 4, 3, 5, 77);
  auto va = tensor_views(a), vb = tensor_views(b);
  for (size_t t = 0; t < va.size(); ++t) {
    for (size_t i = 0; i < va[t].size(); ++i) CHECK(va[t].data[i] == vb[t].data[i]);
  }
  // Biases start at zero.
  ModelParams c = small_model(ModelConfig::Cell::Lstm, 1, 3, 2, 4, 78);
  const auto& p = std::get<LstmParams>(c.layers[0]);
  for (double v : p.bf) CHECK(v == 0.0);
  for (double v : c.out_b) CHECK(v == 0.0);
}
