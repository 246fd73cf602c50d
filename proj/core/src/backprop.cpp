#include "tbptt/backprop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tbptt/checkpoint.hpp"

namespace tbptt {

GradAccumulator::GradAccumulator(const ModelParams& like) : g(like) { zero(); }

void GradAccumulator::zero() {
  for (auto& view : tensor_views(g)) std::fill(view.data, view.data + view.size(), 0.0);
}

void grad_axpy(GradAccumulator& y, GradAccumulator& x, double alpha) {
  auto yv = y.views();
  auto xv = x.views();
  check(yv.size() == xv.size(), "grad_axpy: shape mismatch");
  for (size_t t = 0; t < yv.size(); ++t) {
    check(yv[t].size() == xv[t].size(), "grad_axpy: tensor size mismatch");
    for (size_t i = 0; i < yv[t].size(); ++i) yv[t].data[i] += alpha * xv[t].data[i];
  }
}

void grad_scale(GradAccumulator& gr, double alpha) {
  for (auto& view : gr.views())
    for (size_t i = 0; i < view.size(); ++i) view.data[i] *= alpha;
}

double grad_norm(GradAccumulator& gr) {
  double acc = 0.0;
  for (auto& view : gr.views())
    for (size_t i = 0; i < view.size(); ++i) acc += view.data[i] * view.data[i];
  return std::sqrt(acc);
}

double grad_max_abs_diff(GradAccumulator& a, GradAccumulator& b) {
  auto av = a.views();
  auto bv = b.views();
  check(av.size() == bv.size(), "grad_max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (size_t t = 0; t < av.size(); ++t)
    for (size_t i = 0; i < av[t].size(); ++i)
      worst = std::max(worst, std::abs(av[t].data[i] - bv[t].data[i]));
  return worst;
}

bool grad_all_finite(GradAccumulator& gr) {
  for (auto& view : gr.views())
    for (size_t i = 0; i < view.size(); ++i)
      if (!std::isfinite(view.data[i])) return false;
  return true;
}

AdjointState zero_adjoint(const ModelParams& m) { return zero_state(m); }

double adjoint_norm(const AdjointState& adj) {
  double acc = 0.0;
  for (const auto& layer : adj.layers) {
    for (double v : layer.h) acc += v * v;
    for (double v : layer.c) acc += v * v;
  }
  return std::sqrt(acc);
}

namespace {

void vjp_simple(const SimpleRnnParams& p, const SimpleTapeEntry& e, LayerState& adj,
                SimpleRnnParams* grad, Vector& dx) {
  const size_t d = e.h_new.size();
  check(adj.h.size() == d, "vjp: adjoint/tape shape mismatch");

  Vector da(d);
  if (e.act == Activation::Tanh) {
    for (size_t k = 0; k < d; ++k) da[k] = adj.h[k] * (1.0 - e.h_new[k] * e.h_new[k]);
  } else {
    da = adj.h;
  }

  if (grad) {
    outer_add(grad->w, da.data(), e.h_prev.data());
    outer_add(grad->u, da.data(), e.x.data());
    for (size_t k = 0; k < d; ++k) grad->b[k] += da[k];
  }

  std::fill(adj.h.begin(), adj.h.end(), 0.0);
  matvec_transpose_add(p.w, da.data(), adj.h.data());
  dx.assign(e.x.size(), 0.0);
  matvec_transpose_add(p.u, da.data(), dx.data());
}

void vjp_lstm(const LstmParams& p, const LstmTapeEntry& e, LayerState& adj,
              LstmParams* grad, Vector& dx) {
  const size_t d = e.h_new.size();
  check(adj.h.size() == d && adj.c.size() == d, "vjp: adjoint/tape shape mismatch");

  Vector d_o(d), dc(d), df(d), di(d), dz(d);
  for (size_t k = 0; k < d; ++k) {
    d_o[k] = adj.h[k] * e.tanh_c[k];
    dc[k] = adj.c[k] + adj.h[k] * e.o[k] * (1.0 - e.tanh_c[k] * e.tanh_c[k]);
    df[k] = dc[k] * e.c_prev[k];
    di[k] = dc[k] * e.z[k];
    dz[k] = dc[k] * e.i[k];
    adj.c[k] = dc[k] * e.f[k];  // adjoint w.r.t. c_prev
  }

  // Pre-activation adjoints.
  Vector daf(d), dai(d), dao(d), daz(d);
  for (size_t k = 0; k < d; ++k) {
    daf[k] = df[k] * e.f[k] * (1.0 - e.f[k]);
    dai[k] = di[k] * e.i[k] * (1.0 - e.i[k]);
    dao[k] = d_o[k] * e.o[k] * (1.0 - e.o[k]);
    daz[k] = dz[k] * (1.0 - e.z[k] * e.z[k]);
  }

  if (grad) {
    outer_add(grad->wf, daf.data(), e.h_prev.data());
    outer_add(grad->wi, dai.data(), e.h_prev.data());
    outer_add(grad->wo, dao.data(), e.h_prev.data());
    outer_add(grad->wz, daz.data(), e.h_prev.data());
    outer_add(grad->uf, daf.data(), e.x.data());
    outer_add(grad->ui, dai.data(), e.x.data());
    outer_add(grad->uo, dao.data(), e.x.data());
    outer_add(grad->uz, daz.data(), e.x.data());
    for (size_t k = 0; k < d; ++k) {
      grad->bf[k] += daf[k];
      grad->bi[k] += dai[k];
      grad->bo[k] += dao[k];
      grad->bz[k] += daz[k];
    }
  }

  std::fill(adj.h.begin(), adj.h.end(), 0.0);
  matvec_transpose_add(p.wf, daf.data(), adj.h.data());
  matvec_transpose_add(p.wi, dai.data(), adj.h.data());
  matvec_transpose_add(p.wo, dao.data(), adj.h.data());
  matvec_transpose_add(p.wz, daz.data(), adj.h.data());
  dx.assign(e.x.size(), 0.0);
  matvec_transpose_add(p.uf, daf.data(), dx.data());
  matvec_transpose_add(p.ui, dai.data(), dx.data());
  matvec_transpose_add(p.uo, dao.data(), dx.data());
  matvec_transpose_add(p.uz, daz.data(), dx.data());
}

}  // namespace

Vector vjp_layer_step(const LayerParams& p, const LayerTapeEntry& entry,
                      LayerState& adjoint, LayerParams* grad) {
  Vector dx;
  if (auto* sp = std::get_if<SimpleRnnParams>(&p)) {
    auto* se = std::get_if<SimpleTapeEntry>(&entry);
    check(se != nullptr, "vjp_layer_step: tape entry kind mismatch");
    SimpleRnnParams* sg = grad ? &std::get<SimpleRnnParams>(*grad) : nullptr;
    vjp_simple(*sp, *se, adjoint, sg, dx);
  } else {
    auto* le = std::get_if<LstmTapeEntry>(&entry);
    check(le != nullptr, "vjp_layer_step: tape entry kind mismatch");
    LstmParams* lg = grad ? &std::get<LstmParams>(*grad) : nullptr;
    vjp_lstm(std::get<LstmParams>(p), *le, adjoint, lg, dx);
  }
  return dx;
}

void inject_loss_adjoint(const ModelParams& m, const TapeStep& step, AdjointState& adj,
                         GradAccumulator* grads) {
  check(step.dlogits.size() == static_cast<size_t>(m.vocab()),
        "inject_loss_adjoint: dlogits size mismatch");
  if (grads) {
    outer_add(grads->g.out_w, step.dlogits.data(), step.top_h().data());
    for (size_t k = 0; k < step.dlogits.size(); ++k) grads->g.out_b[k] += step.dlogits[k];
  }
  matvec_transpose_add(m.out_w, step.dlogits.data(), adj.layers.back().h.data());
}

void backward_step(const ModelParams& m, const TapeStep& step, AdjointState& adj,
                   GradAccumulator* grads) {
  check(step.layers.size() == m.layers.size(), "backward_step: tape/layer count mismatch");
  for (int l = static_cast<int>(m.layers.size()) - 1; l >= 0; --l) {
    LayerParams* lgrad = grads ? &grads->g.layers[l] : nullptr;
    Vector dx = vjp_layer_step(m.layers[l], step.layers[l], adj.layers[l], lgrad);
    if (l > 0) {
      Vector& below = adj.layers[l - 1].h;
      for (size_t k = 0; k < dx.size(); ++k) below[k] += dx[k];
    } else if (grads) {
      double* row = grads->g.embedding.row(step.token);
      for (size_t k = 0; k < dx.size(); ++k) row[k] += dx[k];
    }
  }
}

void bptt_into(GradAccumulator& out, const ModelParams& m, const Tape& tape, int k1,
               int k2) {
  check(k2 >= 1, "bptt: k2 must be at least 1");
  check(k2 <= k1, "bptt: k2 must not exceed k1");
  check(static_cast<size_t>(k2) <= tape.size(), "bptt: window too short for k2 losses");

  out.zero();
  AdjointState adj = zero_adjoint(m);
  const int n = static_cast<int>(tape.size());
  const int deepest = std::min(k1, n - 1);
  for (int k = 0; k <= deepest; ++k) {
    const TapeStep& step = tape[n - 1 - k];
    if (k < k2) inject_loss_adjoint(m, step, adj, &out);
    backward_step(m, step, adj, &out);
  }
  grad_scale(out, 1.0 / k2);
}

GradAccumulator bptt(const ModelParams& m, const Tape& tape, int k1, int k2) {
  GradAccumulator out(m);
  bptt_into(out, m, tape, k1, k2);
  return out;
}

GradNormProfile grad_norm_profile(const ModelParams& m, std::span<const int> tokens,
                                  std::span<const int> targets,
                                  std::span<const size_t> samples, int window) {
  check(window >= 1, "grad_norm_profile: window must be positive");
  check(tokens.size() == targets.size(), "grad_norm_profile: tokens/targets mismatch");
  GradNormProfile out;
  out.window = window;
  out.sample_indices.assign(samples.begin(), samples.end());
  out.phi.reserve(samples.size());

  const size_t span = 2 * static_cast<size_t>(window);
  for (size_t s : samples) {
    check(s + 1 >= span && s < tokens.size(), "grad_norm_profile: insufficient history at sample");
    const size_t start = s + 1 - span;

    HiddenStates state = zero_state(m);
    // Burn-in half: forward only.
    forward_window(m, state, tokens.subspan(start, window), targets.subspan(start, window),
                   nullptr);
    // Recorded half: the newest `window` steps.
    Tape tape;
    forward_window(m, state, tokens.subspan(start + window, window),
                   targets.subspan(start + window, window), &tape);

    std::vector<double> row(window + 1, 0.0);
    AdjointState adj = zero_adjoint(m);
    inject_loss_adjoint(m, tape.back(), adj, nullptr);
    row[0] = adjoint_norm(adj);
    for (int k = 1; k <= window; ++k) {
      backward_step(m, tape[window - k], adj, nullptr);
      row[k] = adjoint_norm(adj);
    }
    out.phi.push_back(std::move(row));
  }
  return out;
}

GradAccumulator finite_diff_gradient(ModelParams& theta,
                                     const std::function<double(const ModelParams&)>& loss,
                                     double eps) {
  GradAccumulator out(theta);
  auto theta_views = tensor_views(theta);
  auto grad_views = out.views();
  for (size_t t = 0; t < theta_views.size(); ++t) {
    for (size_t i = 0; i < theta_views[t].size(); ++i) {
      double& v = theta_views[t].data[i];
      const double saved = v;
      v = saved + eps;
      const double up = loss(theta);
      v = saved - eps;
      const double down = loss(theta);
      v = saved;
      grad_views[t].data[i] = (up - down) / (2.0 * eps);
    }
  }
  return out;
}

void write_profile_csv(const std::string& path, const GradNormProfile& p) {
  std::ofstream out(path);
  check(out.good(), "write_profile_csv: cannot open " + path);
  out << "sample_index,lag,phi\n";
  for (size_t i = 0; i < p.phi.size(); ++i) {
    for (int k = 0; k <= p.window; ++k) {
      out << p.sample_indices[i] << ',' << k << ',' << format_double(p.phi[i][k]) << '\n';
    }
  }
  check(out.good(), "write_profile_csv: write failed for " + path);
}

}  // namespace tbptt
