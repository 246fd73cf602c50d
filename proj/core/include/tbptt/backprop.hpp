#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tbptt/cells.hpp"

namespace tbptt {

// Gradient buffers shaped exactly like the model parameters.
struct GradAccumulator {
  ModelParams g;

  GradAccumulator() = default;
  explicit GradAccumulator(const ModelParams& like);

  void zero();
  std::vector<TensorView> views() { return tensor_views(g); }
};

void grad_axpy(GradAccumulator& y, GradAccumulator& x, double alpha);  // y += alpha*x
void grad_scale(GradAccumulator& gr, double alpha);
double grad_norm(GradAccumulator& gr);
double grad_max_abs_diff(GradAccumulator& a, GradAccumulator& b);
bool grad_all_finite(GradAccumulator& gr);

// Adjoints of the loss w.r.t. the recurrent state, one (h, c) pair per layer.
using AdjointState = HiddenStates;

AdjointState zero_adjoint(const ModelParams& m);

// Euclidean norm of all layers' recurrent-state adjoints concatenated
// (h and c components together).
double adjoint_norm(const AdjointState& adj);

// One layer's reverse step: maps the adjoint at the step output to the
// adjoint at the step input, accumulating this step's parameter gradients
// into `grad` (pass nullptr to skip them).  Returns the adjoint w.r.t. the
// layer input x, which feeds the layer below in a stack.
Vector vjp_layer_step(const LayerParams& p, const LayerTapeEntry& entry,
                      LayerState& adjoint, LayerParams* grad);

// Adds the loss-at-this-step adjoint: out_w^T dlogits onto the top layer's h
// adjoint, plus the output head's own gradient contributions.
void inject_loss_adjoint(const ModelParams& m, const TapeStep& step, AdjointState& adj,
                         GradAccumulator* grads);

// One full-stack reverse step through a recorded TapeStep: transforms `adj`
// from the adjoint w.r.t. this step's output state into the adjoint w.r.t.
// the previous state, accumulating parameter and embedding gradients.
void backward_step(const ModelParams& m, const TapeStep& step, AdjointState& adj,
                   GradAccumulator* grads);

// Truncated backpropagation over the newest entries of `tape`: the last `k2`
// steps' losses are absorbed, every adjoint is propagated for up to `k1`
// lags, and the result is normalized by 1/k2.  Lags reaching past the start
// of the tape are dropped (the window's initial state is a constant input).
// Requires 1 <= k2 <= k1 and k2 <= tape.size().
void bptt_into(GradAccumulator& out, const ModelParams& m, const Tape& tape, int k1,
               int k2);
GradAccumulator bptt(const ModelParams& m, const Tape& tape, int k1, int k2);

// Backpropagated gradient norms phi[sample][lag] for lag in [0, window].
struct GradNormProfile {
  int window = 0;
  std::vector<size_t> sample_indices;
  std::vector<std::vector<double>> phi;  // phi[i][k], k in [0, window]
};

// For each sampled index s, runs a fresh forward pass of length 2*window
// from zero state over tokens[s-2*window+1 .. s] (the first half is burn-in),
// takes the single loss at s, and records the adjoint norm at every lag.
// Requires s >= 2*window - 1 for every sample.
GradNormProfile grad_norm_profile(const ModelParams& m, std::span<const int> tokens,
                                  std::span<const int> targets,
                                  std::span<const size_t> samples, int window);

// Central differences (L(v+eps) - L(v-eps)) / (2 eps) per coordinate.
// `theta` is restored bit-exactly.
GradAccumulator finite_diff_gradient(ModelParams& theta,
                                     const std::function<double(const ModelParams&)>& loss,
                                     double eps);

// CSV dump with header sample_index,lag,phi.
void write_profile_csv(const std::string& path, const GradNormProfile& p);

}  // namespace tbptt
