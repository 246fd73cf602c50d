#include "tbptt/cells.hpp"

#include <cmath>

namespace tbptt {

int layer_hidden_dim(const LayerParams& p) {
  return std::visit([](const auto& c) { return c.hidden_dim(); }, p);
}

int layer_input_dim(const LayerParams& p) {
  return std::visit([](const auto& c) { return c.input_dim(); }, p);
}

std::vector<TensorView> tensor_views(ModelParams& m) {
  std::vector<TensorView> views;
  auto add_m = [&](const std::string& name, Matrix& t) {
    views.push_back({name, t.rows, t.cols, t.data.data()});
  };
  auto add_v = [&](const std::string& name, Vector& t) {
    views.push_back({name, static_cast<int>(t.size()), 1, t.data()});
  };
  add_m("embedding", m.embedding);
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    if (auto* s = std::get_if<SimpleRnnParams>(&m.layers[l])) {
      add_m(prefix + "W", s->w);
      add_m(prefix + "U", s->u);
      add_v(prefix + "b", s->b);
    } else {
      auto& c = std::get<LstmParams>(m.layers[l]);
      add_m(prefix + "Wf", c.wf);
      add_m(prefix + "Wi", c.wi);
      add_m(prefix + "Wo", c.wo);
      add_m(prefix + "Wz", c.wz);
      add_m(prefix + "Uf", c.uf);
      add_m(prefix + "Ui", c.ui);
      add_m(prefix + "Uo", c.uo);
      add_m(prefix + "Uz", c.uz);
      add_v(prefix + "bf", c.bf);
      add_v(prefix + "bi", c.bi);
      add_v(prefix + "bo", c.bo);
      add_v(prefix + "bz", c.bz);
    }
  }
  add_m("out_w", m.out_w);
  add_v("out_b", m.out_b);
  return views;
}

HiddenStates zero_state(const ModelParams& m) {
  HiddenStates s;
  s.layers.resize(m.layers.size());
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const int d = layer_hidden_dim(m.layers[l]);
    s.layers[l].h.assign(d, 0.0);
    if (std::holds_alternative<LstmParams>(m.layers[l])) s.layers[l].c.assign(d, 0.0);
  }
  return s;
}

const Vector& TapeStep::top_h() const {
  return std::visit([](const auto& e) -> const Vector& { return e.h_new; }, layers.back());
}

Vector simple_rnn_step(const SimpleRnnParams& p, const Vector& h, const Vector& x,
                       SimpleTapeEntry* tape) {
  check(static_cast<int>(h.size()) == p.w.cols, "simple_rnn_step: h dim mismatch");
  check(static_cast<int>(x.size()) == p.u.cols, "simple_rnn_step: x dim mismatch");
  Vector a = p.b;
  matvec_add(p.w, h.data(), a.data());
  matvec_add(p.u, x.data(), a.data());
  if (p.act == Activation::Tanh) {
    for (double& v : a) v = std::tanh(v);
  }
  if (tape) {
    tape->h_prev = h;
    tape->x = x;
    tape->h_new = a;
    tape->act = p.act;
  }
  return a;
}

LstmStepResult lstm_step(const LstmParams& p, const Vector& c, const Vector& h,
                         const Vector& x, LstmTapeEntry* tape) {
  const int d = p.hidden_dim();
  check(static_cast<int>(h.size()) == d && static_cast<int>(c.size()) == d,
        "lstm_step: state dim mismatch");
  check(static_cast<int>(x.size()) == p.uf.cols, "lstm_step: x dim mismatch");

  auto gate = [&](const Matrix& w, const Matrix& u, const Vector& b) {
    Vector a = b;
    matvec_add(w, h.data(), a.data());
    matvec_add(u, x.data(), a.data());
    return a;
  };
  Vector f = gate(p.wf, p.uf, p.bf);
  Vector i = gate(p.wi, p.ui, p.bi);
  Vector o = gate(p.wo, p.uo, p.bo);
  Vector z = gate(p.wz, p.uz, p.bz);
  for (int k = 0; k < d; ++k) {
    f[k] = sigmoid(f[k]);
    i[k] = sigmoid(i[k]);
    o[k] = sigmoid(o[k]);
    z[k] = std::tanh(z[k]);
  }

  LstmStepResult r;
  r.c.resize(d);
  r.h.resize(d);
  Vector tanh_c(d);
  for (int k = 0; k < d; ++k) {
    r.c[k] = i[k] * z[k] + f[k] * c[k];
    tanh_c[k] = std::tanh(r.c[k]);
    r.h[k] = o[k] * tanh_c[k];
  }

  if (tape) {
    tape->h_prev = h;
    tape->c_prev = c;
    tape->x = x;
    tape->f = std::move(f);
    tape->i = std::move(i);
    tape->o = std::move(o);
    tape->z = std::move(z);
    tape->c_new = r.c;
    tape->tanh_c = std::move(tanh_c);
    tape->h_new = r.h;
  }
  return r;
}

double forward_step(const ModelParams& m, HiddenStates& state, int token, int target,
                    TapeStep* tape) {
  check(token >= 0 && token < m.vocab(), "forward_step: token outside vocabulary");
  check(target >= 0 && target < m.vocab(), "forward_step: target outside vocabulary");
  check(state.layers.size() == m.layers.size(), "forward_step: state/layer count mismatch");

  if (tape) {
    tape->token = token;
    tape->target = target;
    tape->layers.resize(m.layers.size());
  }

  Vector x(m.embedding.row(token), m.embedding.row(token) + m.emb_dim());
  for (size_t l = 0; l < m.layers.size(); ++l) {
    if (auto* s = std::get_if<SimpleRnnParams>(&m.layers[l])) {
      SimpleTapeEntry* e = nullptr;
      if (tape) {
        tape->layers[l] = SimpleTapeEntry{};
        e = &std::get<SimpleTapeEntry>(tape->layers[l]);
      }
      state.layers[l].h = simple_rnn_step(*s, state.layers[l].h, x, e);
    } else {
      const auto& c = std::get<LstmParams>(m.layers[l]);
      LstmTapeEntry* e = nullptr;
      if (tape) {
        tape->layers[l] = LstmTapeEntry{};
        e = &std::get<LstmTapeEntry>(tape->layers[l]);
      }
      auto r = lstm_step(c, state.layers[l].c, state.layers[l].h, x, e);
      state.layers[l].c = std::move(r.c);
      state.layers[l].h = std::move(r.h);
    }
    x = state.layers[l].h;
  }

  Vector logits = affine(m.out_w, state.layers.back().h, m.out_b);
  XentResult xr = softmax_xent(logits, target);
  if (tape) {
    tape->loss = xr.loss;
    tape->dlogits = std::move(xr.dlogits);
  }
  return xr.loss;
}

WindowResult forward_window(const ModelParams& m, HiddenStates& state,
                            std::span<const int> tokens, std::span<const int> targets,
                            Tape* tape) {
  check(tokens.size() == targets.size(), "forward_window: tokens/targets length mismatch");
  WindowResult r;
  r.losses.reserve(tokens.size());
  for (size_t t = 0; t < tokens.size(); ++t) {
    if (tape) {
      tape->emplace_back();
      r.losses.push_back(forward_step(m, state, tokens[t], targets[t], &tape->back()));
    } else {
      r.losses.push_back(forward_step(m, state, tokens[t], targets[t], nullptr));
    }
  }
  return r;
}

ModelParams make_model(const ModelConfig& cfg, SeededRng& rng) {
  check(cfg.num_layers >= 1, "make_model: need at least one layer");
  ModelParams m;
  m.embedding = Matrix(cfg.vocab, cfg.emb_dim);
  int in_dim = cfg.emb_dim;
  for (int l = 0; l < cfg.num_layers; ++l) {
    if (cfg.cell == ModelConfig::Cell::Lstm) {
      LstmParams p;
      for (Matrix* w : {&p.wf, &p.wi, &p.wo, &p.wz}) *w = Matrix(cfg.hidden_dim, cfg.hidden_dim);
      for (Matrix* u : {&p.uf, &p.ui, &p.uo, &p.uz}) *u = Matrix(cfg.hidden_dim, in_dim);
      for (Vector* b : {&p.bf, &p.bi, &p.bo, &p.bz}) b->assign(cfg.hidden_dim, 0.0);
      m.layers.emplace_back(std::move(p));
    } else {
      SimpleRnnParams p;
      p.w = Matrix(cfg.hidden_dim, cfg.hidden_dim);
      p.u = Matrix(cfg.hidden_dim, in_dim);
      p.b.assign(cfg.hidden_dim, 0.0);
      p.act = cfg.cell == ModelConfig::Cell::SimpleTanh ? Activation::Tanh
                                                        : Activation::Identity;
      m.layers.emplace_back(std::move(p));
    }
    in_dim = cfg.hidden_dim;
  }
  m.out_w = Matrix(cfg.vocab, cfg.hidden_dim);
  m.out_b.assign(cfg.vocab, 0.0);

  for (auto& view : tensor_views(m)) {
    const bool is_bias = view.cols == 1 && view.name.find(".b") != std::string::npos;
    const bool is_out_bias = view.name == "out_b";
    if (is_bias || is_out_bias) continue;
    for (size_t i = 0; i < view.size(); ++i) view.data[i] = rng.uniform(-0.1, 0.1);
  }
  return m;
}

double spectral_norm_estimate(const Matrix& a, int iters, uint64_t seed) {
  SeededRng rng(seed);
  Vector v(a.cols);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  Vector av(a.rows), atav(a.cols);
  double norm = 0.0;
  for (int it = 0; it < iters; ++it) {
    std::fill(av.begin(), av.end(), 0.0);
    matvec_add(a, v.data(), av.data());
    std::fill(atav.begin(), atav.end(), 0.0);
    matvec_transpose_add(a, av.data(), atav.data());
    norm = euclid_norm(atav);
    if (norm == 0.0) return 0.0;
    for (size_t i = 0; i < v.size(); ++i) v[i] = atav[i] / norm;
  }
  std::fill(av.begin(), av.end(), 0.0);
  matvec_add(a, v.data(), av.data());
  return euclid_norm(av) / euclid_norm(v);
}

void scale_spectral_norm(Matrix& w, double target) {
  const double current = spectral_norm_estimate(w);
  check(current > 0.0, "scale_spectral_norm: zero matrix");
  const double factor = target / current;
  for (double& v : w.data) v *= factor;
}

}  // namespace tbptt
