#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "minimt/common.hpp"
#include "minimt/model/config.hpp"
#include "minimt/rng.hpp"

namespace minimt::model {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct LinearP {
  Mat<T> w;  // in x out
  Mat<T> b;  // 1 x out
};

template <typename T>
struct NormP {
  Mat<T> gain;  // 1 x d
  Mat<T> bias;  // 1 x d
};

template <typename T>
struct AttnP {
  LinearP<T> q, k, v, o;
};

template <typename T>
struct EncLayerP {
  NormP<T> ln1;
  AttnP<T> attn;
  NormP<T> ln2;
  LinearP<T> ff1, ff2;
};

template <typename T>
struct DecLayerP {
  NormP<T> ln1;
  AttnP<T> self_attn;
  NormP<T> ln2;
  AttnP<T> cross_attn;
  NormP<T> ln3;
  LinearP<T> ff1, ff2;
};

// All trainable tensors. Shapes are a pure function of ModelConfig; traversal
// order is fixed, which serialization, the optimizer and the finite-difference
// harness all rely on.
template <typename T>
struct Parameters {
  Mat<T> embedding;             // V x d, shared by encoder and decoder
  Mat<T> out_proj;              // V x d when untied, else 0 x 0
  std::vector<EncLayerP<T>> enc;
  std::vector<DecLayerP<T>> dec;
  NormP<T> enc_ln, dec_ln;      // final pre-LN stack norms
  bool tied = true;

  static Parameters shaped(const ModelConfig& cfg);
  static Parameters random_init(const ModelConfig& cfg, uint64_t seed);

  template <typename F>
  void for_each(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(const_cast<Parameters&>(*this),
          [&](const std::string& name, Mat<T>& m) {
            f(name, static_cast<const Mat<T>&>(m));
          });
  }

  size_t count() const;
  void set_zero();
  void scale(T s);
  void add_scaled(const Parameters& other, T s);
  std::optional<std::string> first_nonfinite() const;
  uint64_t digest() const;  // over raw element bytes, traversal order

 private:
  template <typename P, typename F>
  static void visit_linear(const std::string& name, P& p, F& f) {
    f(name + ".w", p.w);
    f(name + ".b", p.b);
  }
  template <typename P, typename F>
  static void visit_norm(const std::string& name, P& p, F& f) {
    f(name + ".gain", p.gain);
    f(name + ".bias", p.bias);
  }
  template <typename P, typename F>
  static void visit_attn(const std::string& name, P& p, F& f) {
    visit_linear(name + ".q", p.q, f);
    visit_linear(name + ".k", p.k, f);
    visit_linear(name + ".v", p.v, f);
    visit_linear(name + ".o", p.o, f);
  }
  template <typename F>
  static void visit(Parameters& ps, F&& f) {
    f(std::string("embedding"), ps.embedding);
    if (!ps.tied) f(std::string("out_proj"), ps.out_proj);
    for (size_t i = 0; i < ps.enc.size(); ++i) {
      std::string base = "enc." + std::to_string(i);
      visit_norm(base + ".ln1", ps.enc[i].ln1, f);
      visit_attn(base + ".attn", ps.enc[i].attn, f);
      visit_norm(base + ".ln2", ps.enc[i].ln2, f);
      visit_linear(base + ".ff1", ps.enc[i].ff1, f);
      visit_linear(base + ".ff2", ps.enc[i].ff2, f);
    }
    visit_norm("enc_ln", ps.enc_ln, f);
    for (size_t i = 0; i < ps.dec.size(); ++i) {
      std::string base = "dec." + std::to_string(i);
      visit_norm(base + ".ln1", ps.dec[i].ln1, f);
      visit_attn(base + ".self", ps.dec[i].self_attn, f);
      visit_norm(base + ".ln2", ps.dec[i].ln2, f);
      visit_attn(base + ".cross", ps.dec[i].cross_attn, f);
      visit_norm(base + ".ln3", ps.dec[i].ln3, f);
      visit_linear(base + ".ff1", ps.dec[i].ff1, f);
      visit_linear(base + ".ff2", ps.dec[i].ff2, f);
    }
    visit_norm("dec_ln", ps.dec_ln, f);
  }
};

template <typename T>
Parameters<T> Parameters<T>::shaped(const ModelConfig& cfg) {
  cfg.validate();
  Parameters<T> p;
  p.tied = cfg.tie_embeddings;
  int d = cfg.d_model;
  p.embedding = Mat<T>::Zero(cfg.vocab_size, d);
  if (!p.tied) p.out_proj = Mat<T>::Zero(cfg.vocab_size, d);
  auto linear = [](int in, int out) {
    return LinearP<T>{Mat<T>::Zero(in, out), Mat<T>::Zero(1, out)};
  };
  auto norm = [&] { return NormP<T>{Mat<T>::Zero(1, d), Mat<T>::Zero(1, d)}; };
  auto attn = [&] {
    return AttnP<T>{linear(d, d), linear(d, d), linear(d, d), linear(d, d)};
  };
  for (int i = 0; i < cfg.n_enc_layers; ++i)
    p.enc.push_back({norm(), attn(), norm(), linear(d, cfg.d_ff), linear(cfg.d_ff, d)});
  for (int i = 0; i < cfg.n_dec_layers; ++i)
    p.dec.push_back({norm(), attn(), norm(), attn(), norm(), linear(d, cfg.d_ff),
                     linear(cfg.d_ff, d)});
  p.enc_ln = norm();
  p.dec_ln = norm();
  return p;
}

template <typename T>
Parameters<T> Parameters<T>::random_init(const ModelConfig& cfg, uint64_t seed) {
  Parameters<T> p = shaped(cfg);
  uint64_t ordinal = 0;
  p.for_each([&](const std::string& name, Mat<T>& m) {
    Rng rng(counter_hash(seed, 0x1417, ordinal++));
    if (name.ends_with(".gain")) {
      m.setOnes();
    } else if (name.ends_with(".bias") || name.ends_with(".b")) {
      m.setZero();
    } else if (name == "embedding") {
      T std = T(1) / std::sqrt(T(cfg.d_model));
      for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = static_cast<T>(rng.next_gaussian()) * std;
    } else {
      T limit = std::sqrt(T(6) / T(m.rows() + m.cols()));
      for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = static_cast<T>(rng.next_unit() * 2.0 - 1.0) * limit;
    }
  });
  return p;
}

template <typename T>
size_t Parameters<T>::count() const {
  size_t n = 0;
  for_each([&](const std::string&, const Mat<T>& m) {
    n += static_cast<size_t>(m.size());
  });
  return n;
}

template <typename T>
void Parameters<T>::set_zero() {
  for_each([](const std::string&, Mat<T>& m) { m.setZero(); });
}

template <typename T>
void Parameters<T>::scale(T s) {
  for_each([&](const std::string&, Mat<T>& m) { m *= s; });
}

template <typename T>
void Parameters<T>::add_scaled(const Parameters& other, T s) {
  std::vector<const Mat<T>*> src;
  other.for_each(
      [&](const std::string&, const Mat<T>& m) { src.push_back(&m); });
  size_t i = 0;
  for_each([&](const std::string&, Mat<T>& m) { m += *src[i++] * s; });
}

template <typename T>
std::optional<std::string> Parameters<T>::first_nonfinite() const {
  std::optional<std::string> bad;
  for_each([&](const std::string& name, const Mat<T>& m) {
    if (!bad && !m.allFinite()) bad = name;
  });
  return bad;
}

template <typename T>
uint64_t Parameters<T>::digest() const {
  uint64_t h = kFnvBasis;
  for_each([&](const std::string&, const Mat<T>& m) {
    h = fnv1a64(m.data(), static_cast<size_t>(m.size()) * sizeof(T), h);
  });
  return h;
}

}  // namespace minimt::model
