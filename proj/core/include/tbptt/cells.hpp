#pragma once

#include <deque>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tbptt/numeric.hpp"
#include "tbptt/rng.hpp"

namespace tbptt {

enum class Activation { Tanh, Identity };

// h' = act(W h + U x + b).  Tanh is the trained configuration; the identity
// activation exists for linear fixtures (e.g. nilpotent transition matrices).
struct SimpleRnnParams {
  Matrix w;  // d_h x d_h
  Matrix u;  // d_h x d_in
  Vector b;  // d_h
  Activation act = Activation::Tanh;

  int hidden_dim() const { return w.rows; }
  int input_dim() const { return u.cols; }
};

// Gated cell with state (c, h):
//   f,i,o = sigmoid(W_* h + U_* x + b_*),  z = tanh(W_z h + U_z x + b_z)
//   c' = i*z + f*c,  h' = o*tanh(c')
struct LstmParams {
  Matrix wf, wi, wo, wz;  // d_h x d_h
  Matrix uf, ui, uo, uz;  // d_h x d_in
  Vector bf, bi, bo, bz;  // d_h

  int hidden_dim() const { return wf.rows; }
  int input_dim() const { return uf.cols; }
};

using LayerParams = std::variant<SimpleRnnParams, LstmParams>;

int layer_hidden_dim(const LayerParams& p);
int layer_input_dim(const LayerParams& p);

// Full model: token embedding, a stack of recurrent layers, linear output head.
struct ModelParams {
  Matrix embedding;  // vocab x d_emb
  std::vector<LayerParams> layers;
  Matrix out_w;  // vocab x d_h(top)
  Vector out_b;  // vocab

  int vocab() const { return embedding.rows; }
  int emb_dim() const { return embedding.cols; }
  int top_hidden_dim() const { return layer_hidden_dim(layers.back()); }
};

// Named view over every parameter tensor, in a fixed order.  Checkpointing,
// SGD updates and finite differences all walk the same list.
struct TensorView {
  std::string name;
  int rows = 0;
  int cols = 0;
  double* data = nullptr;
  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

std::vector<TensorView> tensor_views(ModelParams& m);

// Per-layer recurrent state; `c` is empty for simple cells.
struct LayerState {
  Vector h;
  Vector c;
};

struct HiddenStates {
  std::vector<LayerState> layers;
};

HiddenStates zero_state(const ModelParams& m);

// Everything the backward pass needs from one layer's forward step.
struct SimpleTapeEntry {
  Vector h_prev, x, h_new;
  Activation act = Activation::Tanh;
};

struct LstmTapeEntry {
  Vector h_prev, c_prev, x;
  Vector f, i, o, z;   // gate activations
  Vector c_new, tanh_c, h_new;
};

using LayerTapeEntry = std::variant<SimpleTapeEntry, LstmTapeEntry>;

struct TapeStep {
  int token = 0;   // input token (embedding row)
  int target = 0;
  double loss = 0.0;
  Vector dlogits;  // softmax(logits) - onehot(target)
  std::vector<LayerTapeEntry> layers;
  const Vector& top_h() const;
};

using Tape = std::deque<TapeStep>;

// Single-cell steps.  Tape output is optional.
Vector simple_rnn_step(const SimpleRnnParams& p, const Vector& h, const Vector& x,
                       SimpleTapeEntry* tape = nullptr);

struct LstmStepResult {
  Vector c;
  Vector h;
};
LstmStepResult lstm_step(const LstmParams& p, const Vector& c, const Vector& h,
                         const Vector& x, LstmTapeEntry* tape = nullptr);

// One token through the whole stack plus the output head; advances `state`
// in place and returns the step loss.  Records a tape entry when `tape` is
// given.  Throws if the token or target is outside the vocabulary.
double forward_step(const ModelParams& m, HiddenStates& state, int token, int target,
                    TapeStep* tape);

struct WindowResult {
  std::vector<double> losses;
};

// Runs a window of tokens, appending one TapeStep per step when `tape` is
// non-null.  The final state stays in `state` for carryover into the next
// window.
WindowResult forward_window(const ModelParams& m, HiddenStates& state,
                            std::span<const int> tokens, std::span<const int> targets,
                            Tape* tape);

struct ModelConfig {
  enum class Cell { Lstm, SimpleTanh, SimpleIdentity };
  Cell cell = Cell::Lstm;
  int num_layers = 2;
  int hidden_dim = 50;
  int emb_dim = 6;
  int vocab = 8;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Weights i.i.d. uniform on [-0.1, 0.1], biases zero; draw order follows
// tensor_views so a seed pins the exact initialization.
ModelParams make_model(const ModelConfig& cfg, SeededRng& rng);

// Spectral norm estimate via power iteration on A^T A.
double spectral_norm_estimate(const Matrix& a, int iters = 100, uint64_t seed = 12345);

// Rescales W of a single-layer simple RNN so its spectral norm is `target`.
void scale_spectral_norm(Matrix& w, double target);

}  // namespace tbptt
