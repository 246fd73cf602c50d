#include "tbptt/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace tbptt {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  check(ec == std::errc(), "format_double: conversion failed");
  return std::string(buf, ptr);
}

namespace {

double parse_double(const std::string& tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  check(ec == std::errc() && ptr == tok.data() + tok.size(),
        "checkpoint: bad numeric token '" + tok + "'");
  return v;
}

std::string layer_kind(const LayerParams& p) {
  if (auto* s = std::get_if<SimpleRnnParams>(&p)) {
    return s->act == Activation::Tanh ? "rnn_tanh" : "rnn_linear";
  }
  return "lstm";
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& m) {
  std::ofstream out(path);
  check(out.good(), "save_checkpoint: cannot open " + path);
  out << "tbptt-ckpt 1\n";
  out << "arch vocab=" << m.vocab() << " emb=" << m.emb_dim() << " layers=";
  for (size_t l = 0; l < m.layers.size(); ++l) {
    if (l) out << ',';
    out << layer_kind(m.layers[l]) << ':' << layer_hidden_dim(m.layers[l]);
  }
  out << '\n';

  auto& mm = const_cast<ModelParams&>(m);
  for (const auto& view : tensor_views(mm)) {
    out << "tensor " << view.name << ' ' << view.rows << ' ' << view.cols << '\n';
    for (int i = 0; i < view.rows; ++i) {
      for (int j = 0; j < view.cols; ++j) {
        if (j) out << ' ';
        out << format_double(view.data[static_cast<size_t>(i) * view.cols + j]);
      }
      out << '\n';
    }
  }
  out << "end\n";
  check(out.good(), "save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_checkpoint: cannot open " + path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)) && line == "tbptt-ckpt 1",
        "load_checkpoint: bad header in " + path);

  check(static_cast<bool>(std::getline(in, line)) && line.rfind("arch ", 0) == 0,
        "load_checkpoint: missing arch line");
  int vocab = 0, emb = 0;
  std::string layers_desc;
  {
    std::istringstream ss(line.substr(5));
    std::string field;
    while (ss >> field) {
      const auto eq = field.find('=');
      check(eq != std::string::npos, "load_checkpoint: bad arch field " + field);
      const std::string key = field.substr(0, eq);
      const std::string val = field.substr(eq + 1);
      if (key == "vocab") vocab = std::stoi(val);
      else if (key == "emb") emb = std::stoi(val);
      else if (key == "layers") layers_desc = val;
      else check(false, "load_checkpoint: unknown arch key " + key);
    }
  }
  check(vocab > 0 && emb > 0 && !layers_desc.empty(), "load_checkpoint: incomplete arch");

  ModelParams m;
  m.embedding = Matrix(vocab, emb);
  int in_dim = emb;
  int hidden = 0;
  {
    std::istringstream ss(layers_desc);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      check(colon != std::string::npos, "load_checkpoint: bad layer spec " + item);
      const std::string kind = item.substr(0, colon);
      hidden = std::stoi(item.substr(colon + 1));
      if (kind == "lstm") {
        LstmParams p;
        for (Matrix* w : {&p.wf, &p.wi, &p.wo, &p.wz}) *w = Matrix(hidden, hidden);
        for (Matrix* u : {&p.uf, &p.ui, &p.uo, &p.uz}) *u = Matrix(hidden, in_dim);
        for (Vector* b : {&p.bf, &p.bi, &p.bo, &p.bz}) b->assign(hidden, 0.0);
        m.layers.emplace_back(std::move(p));
      } else if (kind == "rnn_tanh" || kind == "rnn_linear") {
        SimpleRnnParams p;
        p.w = Matrix(hidden, hidden);
        p.u = Matrix(hidden, in_dim);
        p.b.assign(hidden, 0.0);
        p.act = kind == "rnn_tanh" ? Activation::Tanh : Activation::Identity;
        m.layers.emplace_back(std::move(p));
      } else {
        check(false, "load_checkpoint: unknown layer kind " + kind);
      }
      in_dim = hidden;
    }
  }
  m.out_w = Matrix(vocab, hidden);
  m.out_b.assign(vocab, 0.0);

  for (auto& view : tensor_views(m)) {
    check(static_cast<bool>(std::getline(in, line)), "load_checkpoint: truncated file");
    std::istringstream ss(line);
    std::string tag, name;
    int rows = 0, cols = 0;
    ss >> tag >> name >> rows >> cols;
    check(tag == "tensor" && name == view.name && rows == view.rows && cols == view.cols,
          "load_checkpoint: tensor mismatch, expected " + view.name + " got '" + line + "'");
    for (int i = 0; i < rows; ++i) {
      check(static_cast<bool>(std::getline(in, line)), "load_checkpoint: truncated tensor");
      std::istringstream row(line);
      std::string tok;
      for (int j = 0; j < cols; ++j) {
        check(static_cast<bool>(row >> tok), "load_checkpoint: short row in " + view.name);
        view.data[static_cast<size_t>(i) * cols + j] = parse_double(tok);
      }
    }
  }
  check(static_cast<bool>(std::getline(in, line)) && line == "end",
        "load_checkpoint: missing end marker");
  return m;
}

}  // namespace tbptt
