#include "minimt/model/transformer.hpp"

#include <cmath>
#include <limits>

namespace minimt::model {

namespace {

constexpr double kLnEps = 1e-5;

// Dropout slot ids. Per-sequence sites (attention probabilities) further mix
// the global item index into the slot.
constexpr uint64_t kSlotEmbEnc = 1;
constexpr uint64_t kSlotEmbDec = 2;
constexpr uint64_t kSlotEnc = 100;  // + layer*10 + {0: probs, 1: attn out, 2: ffn out}
constexpr uint64_t kSlotDec = 500;  // + layer*10 + {0,1: self, 2,3: cross, 4: ffn out}

struct Pack {
  std::vector<TokenId> ids;
  std::vector<int> offset{0};

  int rows() const { return offset.back(); }
  int n_seqs() const { return static_cast<int>(offset.size()) - 1; }
  int len(int s) const { return offset[s + 1] - offset[s]; }

  void add(const std::vector<TokenId>& seq) {
    ids.insert(ids.end(), seq.begin(), seq.end());
    offset.push_back(offset.back() + static_cast<int>(seq.size()));
  }
};

template <typename T>
T gelu_val(T u) {
  return T(0.5) * u * (T(1) + std::erf(u * T(0.70710678118654752)));
}

template <typename T>
T gelu_grad_val(T u) {
  T phi = std::exp(T(-0.5) * u * u) * T(0.39894228040143268);
  T big_phi = T(0.5) * (T(1) + std::erf(u * T(0.70710678118654752)));
  return big_phi + u * phi;
}

template <typename T>
void softmax_rows(Mat<T>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    T m = row.maxCoeff();
    if (!(m > -std::numeric_limits<T>::infinity())) {
      row.setZero();
      continue;
    }
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

template <typename T>
struct NormCache {
  Mat<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
};

template <typename T>
Mat<T> norm_forward(const Mat<T>& x, const NormP<T>& p, NormCache<T>& c) {
  Eigen::Matrix<T, Eigen::Dynamic, 1> mu = x.rowwise().mean();
  Mat<T> centered = x;
  centered.colwise() -= mu;
  Eigen::Matrix<T, Eigen::Dynamic, 1> var =
      centered.array().square().rowwise().mean();
  c.inv_std = (var.array() + T(kLnEps)).sqrt().inverse();
  c.xhat = centered.array().colwise() * c.inv_std.array();
  Mat<T> y = c.xhat.array().rowwise() * p.gain.array().row(0);
  y.array().rowwise() += p.bias.array().row(0);
  return y;
}

template <typename T>
Mat<T> norm_backward(const Mat<T>& dy, const NormP<T>& p, const NormCache<T>& c,
                     NormP<T>& g) {
  g.gain.array().row(0) += (dy.array() * c.xhat.array()).colwise().sum();
  g.bias.array().row(0) += dy.array().colwise().sum();
  Mat<T> dxhat = dy.array().rowwise() * p.gain.array().row(0);
  Eigen::Matrix<T, Eigen::Dynamic, 1> m1 = dxhat.rowwise().mean();
  Eigen::Matrix<T, Eigen::Dynamic, 1> m2 =
      (dxhat.array() * c.xhat.array()).rowwise().mean();
  Mat<T> dx = dxhat;
  dx.colwise() -= m1;
  dx.array() -= c.xhat.array().colwise() * m2.array();
  dx.array().colwise() *= c.inv_std.array();
  return dx;
}

template <typename T>
Mat<T> linear_forward(const Mat<T>& x, const LinearP<T>& p) {
  Mat<T> y = x * p.w;
  y.array().rowwise() += p.b.array().row(0);
  return y;
}

template <typename T>
Mat<T> linear_backward(const Mat<T>& dy, const Mat<T>& x, const LinearP<T>& p,
                       LinearP<T>& g) {
  g.w.noalias() += x.transpose() * dy;
  g.b.array().row(0) += dy.array().colwise().sum();
  return dy * p.w.transpose();
}

template <typename T>
void apply_dropout(Mat<T>& x, T rate, uint64_t seed, uint64_t step,
                   uint64_t slot) {
  if (rate <= T(0)) return;
  const double r = static_cast<double>(rate);
  const T scale = T(1) / (T(1) - rate);
  T* d = x.data();
  const auto n = static_cast<uint64_t>(x.size());
  for (uint64_t i = 0; i < n; ++i) {
    if (counter_uniform(seed, step, slot, i) < r)
      d[i] = T(0);
    else
      d[i] *= scale;
  }
}

template <typename T>
struct AttnCache {
  Mat<T> q, k, v, ctx;
  std::vector<Mat<T>> probs;  // per seq: (heads*Lq) x Lk, post-softmax pre-dropout
};

struct AttnShape {
  const std::vector<int>* q_off;
  const std::vector<int>* kv_off;
  const std::vector<TokenId>* key_ids;  // PAD positions masked from keys
  const std::vector<int>* kv_index = nullptr;  // optional seq remap (decode)
  bool causal = false;
};

}  // namespace

template <typename T>
struct Transformer<T>::Impl {
  using Drop = typename Transformer<T>::Dropout;

  static void drop_site(const Drop& d, Mat<T>& x, uint64_t slot) {
    if (d.on()) apply_dropout(x, d.rate, d.seed, d.step, slot);
  }

  // Multi-head attention over packed rows. aq/akv are post-norm inputs; k/v
  // may be precomputed (decode path). Fills cache when given.
  static Mat<T> mha_forward(const ModelConfig& cfg, const AttnP<T>& p,
                            const Mat<T>& aq, const Mat<T>& akv,
                            const AttnShape& sh, const Drop& drop,
                            uint64_t slot_probs, int64_t item_base,
                            AttnCache<T>* cache, const Mat<T>* pre_k = nullptr,
                            const Mat<T>* pre_v = nullptr) {
    const int h = cfg.n_heads;
    const int dk = cfg.d_model / h;
    const T inv_sqrt_dk = T(1) / std::sqrt(T(dk));
    Mat<T> q = linear_forward(aq, p.q);
    Mat<T> k = pre_k ? *pre_k : linear_forward(akv, p.k);
    Mat<T> v = pre_v ? *pre_v : linear_forward(akv, p.v);
    const auto& qo = *sh.q_off;
    const auto& ko = *sh.kv_off;
    const int n_seqs = static_cast<int>(qo.size()) - 1;
    Mat<T> ctx = Mat<T>::Zero(q.rows(), cfg.d_model);
    if (cache) cache->probs.resize(static_cast<size_t>(n_seqs));
    for (int s = 0; s < n_seqs; ++s) {
      const int qs = qo[s], qn = qo[s + 1] - qs;
      const int kseq = sh.kv_index ? (*sh.kv_index)[s] : s;
      const int ks = ko[kseq], kn = ko[kseq + 1] - ks;
      if (qn == 0 || kn == 0) continue;
      Mat<T> probs(h * qn, kn);
      for (int hh = 0; hh < h; ++hh) {
        auto qh = q.block(qs, hh * dk, qn, dk);
        auto kh = k.block(ks, hh * dk, kn, dk);
        Mat<T> sc = (qh * kh.transpose()) * inv_sqrt_dk;
        if (sh.key_ids) {
          for (int j = 0; j < kn; ++j)
            if ((*sh.key_ids)[static_cast<size_t>(ks + j)] == Vocabulary::kPad)
              sc.col(j).setConstant(-std::numeric_limits<T>::infinity());
        }
        if (sh.causal) {
          for (int i = 0; i < qn; ++i)
            for (int j = i + 1; j < kn; ++j)
              sc(i, j) = -std::numeric_limits<T>::infinity();
        }
        softmax_rows(sc);
        probs.middleRows(hh * qn, qn) = sc;
      }
      Mat<T> probs_d = probs;
      if (drop.on())
        apply_dropout(probs_d, drop.rate, drop.seed, drop.step,
                      counter_hash(slot_probs, static_cast<uint64_t>(
                                                   item_base + s)));
      for (int hh = 0; hh < h; ++hh)
        ctx.block(qs, hh * dk, qn, dk).noalias() =
            probs_d.middleRows(hh * qn, qn) * v.block(ks, hh * dk, kn, dk);
      if (cache) cache->probs[static_cast<size_t>(s)] = std::move(probs);
    }
    Mat<T> out = linear_forward(ctx, p.o);
    if (cache) {
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->ctx = std::move(ctx);
    }
    return out;
  }

  // Returns gradient w.r.t. aq; adds gradient w.r.t. akv into dakv.
  static Mat<T> mha_backward(const ModelConfig& cfg, const AttnP<T>& p,
                             const Mat<T>& aq, const Mat<T>& akv,
                             const AttnShape& sh, const Drop& drop,
                             uint64_t slot_probs, int64_t item_base,
                             const AttnCache<T>& cache, const Mat<T>& dout,
                             AttnP<T>& g, Mat<T>& dakv) {
    const int h = cfg.n_heads;
    const int dk = cfg.d_model / h;
    const T inv_sqrt_dk = T(1) / std::sqrt(T(dk));
    Mat<T> dctx = linear_backward(dout, cache.ctx, p.o, g.o);
    const auto& qo = *sh.q_off;
    const auto& ko = *sh.kv_off;
    const int n_seqs = static_cast<int>(qo.size()) - 1;
    Mat<T> dq = Mat<T>::Zero(cache.q.rows(), cfg.d_model);
    Mat<T> dk_m = Mat<T>::Zero(cache.k.rows(), cfg.d_model);
    Mat<T> dv_m = Mat<T>::Zero(cache.v.rows(), cfg.d_model);
    for (int s = 0; s < n_seqs; ++s) {
      const int qs = qo[s], qn = qo[s + 1] - qs;
      const int kseq = sh.kv_index ? (*sh.kv_index)[s] : s;
      const int ks = ko[kseq], kn = ko[kseq + 1] - ks;
      if (qn == 0 || kn == 0) continue;
      const Mat<T>& probs = cache.probs[static_cast<size_t>(s)];
      uint64_t seq_slot =
          counter_hash(slot_probs, static_cast<uint64_t>(item_base + s));
      Mat<T> probs_d = probs;
      if (drop.on())
        apply_dropout(probs_d, drop.rate, drop.seed, drop.step, seq_slot);
      Mat<T> dprobs(h * qn, kn);
      for (int hh = 0; hh < h; ++hh) {
        auto dctx_h = dctx.block(qs, hh * dk, qn, dk);
        dv_m.block(ks, hh * dk, kn, dk).noalias() +=
            probs_d.middleRows(hh * qn, qn).transpose() * dctx_h;
        dprobs.middleRows(hh * qn, qn).noalias() =
            dctx_h * cache.v.block(ks, hh * dk, kn, dk).transpose();
      }
      if (drop.on())
        apply_dropout(dprobs, drop.rate, drop.seed, drop.step, seq_slot);
      for (int hh = 0; hh < h; ++hh) {
        auto p_h = probs.middleRows(hh * qn, qn);
        auto dp_h = dprobs.middleRows(hh * qn, qn);
        // softmax backward: ds = p .* (dp - rowsum(dp .* p))
        Mat<T> ds = p_h.array() * dp_h.array();
        Eigen::Matrix<T, Eigen::Dynamic, 1> rs = ds.rowwise().sum();
        ds = dp_h;
        ds.colwise() -= rs;
        ds.array() *= p_h.array();
        ds *= inv_sqrt_dk;
        dq.block(qs, hh * dk, qn, dk).noalias() +=
            ds * cache.k.block(ks, hh * dk, kn, dk);
        dk_m.block(ks, hh * dk, kn, dk).noalias() +=
            ds.transpose() * cache.q.block(qs, hh * dk, qn, dk);
      }
    }
    Mat<T> daq = linear_backward(dq, aq, p.q, g.q);
    dakv.noalias() += linear_backward(dk_m, akv, p.k, g.k);
    dakv.noalias() += linear_backward(dv_m, akv, p.v, g.v);
    return daq;
  }
};

namespace {

template <typename T>
Mat<T> sinusoidal_table(int max_positions, int d) {
  Mat<T> pos(max_positions, d);
  for (int p = 0; p < max_positions; ++p) {
    for (int i = 0; i < d / 2; ++i) {
      double angle = p * std::exp(-2.0 * i * std::log(10000.0) / d);
      pos(p, 2 * i) = static_cast<T>(std::sin(angle));
      pos(p, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pos;
}

template <typename T>
Pack build_pack(const std::vector<std::vector<TokenId>>& seqs,
                const ModelConfig& cfg) {
  Pack pack;
  for (const auto& s : seqs) {
    if (static_cast<int>(s.size()) > cfg.max_positions)
      throw ValidationError("sequence of length " + std::to_string(s.size()) +
                            " exceeds max_positions " +
                            std::to_string(cfg.max_positions));
    for (TokenId id : s)
      if (id < 0 || id >= cfg.vocab_size)
        throw ValidationError("token id " + std::to_string(id) +
                              " out of range for vocab size " +
                              std::to_string(cfg.vocab_size));
    pack.add(s);
  }
  return pack;
}

template <typename T>
Mat<T> embed_pack(const Pack& pack, const Parameters<T>& params,
                  const Mat<T>& pos, int d) {
  Mat<T> x(pack.rows(), d);
  const T sqrt_d = std::sqrt(T(d));
  for (int s = 0; s < pack.n_seqs(); ++s) {
    for (int r = pack.offset[s]; r < pack.offset[s + 1]; ++r) {
      int p = r - pack.offset[s];
      x.row(r) = params.embedding.row(pack.ids[static_cast<size_t>(r)]) * sqrt_d +
                 pos.row(p);
    }
  }
  return x;
}

template <typename T>
struct EncLayerTrace {
  Mat<T> x_in, a;
  AttnCache<T> attn;
  Mat<T> x_mid, f, u, g;
  NormCache<T> n1, n2;
};

template <typename T>
struct DecLayerTrace {
  Mat<T> x_in, a;
  AttnCache<T> self_attn;
  Mat<T> x_mid1, c;
  AttnCache<T> cross;
  Mat<T> x_mid2, f, u, g;
  NormCache<T> n1, n2, n3;
};

template <typename T>
struct Trace {
  Pack enc, dec;
  std::vector<EncLayerTrace<T>> enc_l;
  NormCache<T> enc_ln;
  Mat<T> enc_pre_final, memory;
  std::vector<DecLayerTrace<T>> dec_l;
  NormCache<T> dec_ln;
  Mat<T> dec_pre_final, h;
};

template <typename T>
Mat<T> gelu_mat(const Mat<T>& u) {
  Mat<T> g = u;
  T* p = g.data();
  for (Eigen::Index i = 0; i < g.size(); ++i) p[i] = gelu_val(p[i]);
  return g;
}

}  // namespace

template <typename T>
Transformer<T>::Transformer(ModelConfig cfg, uint64_t init_seed)
    : cfg_(cfg), params_(Parameters<T>::random_init(cfg, init_seed)) {
  pos_ = sinusoidal_table<T>(cfg_.max_positions, cfg_.d_model);
}

template <typename T>
Transformer<T>::Transformer(ModelConfig cfg, Parameters<T> params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  pos_ = sinusoidal_table<T>(cfg_.max_positions, cfg_.d_model);
}

namespace {

// Runs the whole encoder-decoder, filling the trace. Factored out of the
// class so forward/backward share it.
template <typename T>
void run_trace(const ModelConfig& cfg, const Parameters<T>& params,
               const Mat<T>& pos, const Batch& b,
               const typename Transformer<T>::Dropout& drop, Trace<T>& t) {
  using I = typename Transformer<T>::Impl;
  std::vector<std::vector<TokenId>> enc_seqs, dec_seqs;
  enc_seqs.reserve(b.items.size());
  dec_seqs.reserve(b.items.size());
  for (const auto& it : b.items) {
    enc_seqs.push_back(it.encoder_ids);
    dec_seqs.push_back(it.decoder_input_ids);
  }
  t.enc = build_pack<T>(enc_seqs, cfg);
  t.dec = build_pack<T>(dec_seqs, cfg);

  Mat<T> x = embed_pack(t.enc, params, pos, cfg.d_model);
  I::drop_site(drop, x, kSlotEmbEnc);
  t.enc_l.resize(params.enc.size());
  for (size_t l = 0; l < params.enc.size(); ++l) {
    auto& lt = t.enc_l[l];
    const auto& lp = params.enc[l];
    const uint64_t base = kSlotEnc + 10 * l;
    lt.x_in = x;
    lt.a = norm_forward(x, lp.ln1, lt.n1);
    AttnShape sh{&t.enc.offset, &t.enc.offset, &t.enc.ids, nullptr, false};
    Mat<T> o = I::mha_forward(cfg, lp.attn, lt.a, lt.a, sh, drop, base + 0,
                              b.item_base, &lt.attn);
    I::drop_site(drop, o, base + 1);
    x += o;
    lt.x_mid = x;
    lt.f = norm_forward(x, lp.ln2, lt.n2);
    lt.u = linear_forward(lt.f, lp.ff1);
    lt.g = gelu_mat(lt.u);
    Mat<T> h2 = linear_forward(lt.g, lp.ff2);
    I::drop_site(drop, h2, base + 2);
    x += h2;
  }
  t.enc_pre_final = x;
  t.memory = norm_forward(x, params.enc_ln, t.enc_ln);

  Mat<T> y = embed_pack(t.dec, params, pos, cfg.d_model);
  I::drop_site(drop, y, kSlotEmbDec);
  t.dec_l.resize(params.dec.size());
  for (size_t l = 0; l < params.dec.size(); ++l) {
    auto& lt = t.dec_l[l];
    const auto& lp = params.dec[l];
    const uint64_t base = kSlotDec + 10 * l;
    lt.x_in = y;
    lt.a = norm_forward(y, lp.ln1, lt.n1);
    AttnShape self_sh{&t.dec.offset, &t.dec.offset, &t.dec.ids, nullptr, true};
    Mat<T> o = I::mha_forward(cfg, lp.self_attn, lt.a, lt.a, self_sh, drop,
                              base + 0, b.item_base, &lt.self_attn);
    I::drop_site(drop, o, base + 1);
    y += o;
    lt.x_mid1 = y;
    lt.c = norm_forward(y, lp.ln2, lt.n2);
    AttnShape cross_sh{&t.dec.offset, &t.enc.offset, &t.enc.ids, nullptr, false};
    Mat<T> o2 = I::mha_forward(cfg, lp.cross_attn, lt.c, t.memory, cross_sh,
                               drop, base + 2, b.item_base, &lt.cross);
    I::drop_site(drop, o2, base + 3);
    y += o2;
    lt.x_mid2 = y;
    lt.f = norm_forward(y, lp.ln3, lt.n3);
    lt.u = linear_forward(lt.f, lp.ff1);
    lt.g = gelu_mat(lt.u);
    Mat<T> h2 = linear_forward(lt.g, lp.ff2);
    I::drop_site(drop, h2, base + 4);
    y += h2;
  }
  t.dec_pre_final = y;
  t.h = norm_forward(y, params.dec_ln, t.dec_ln);
}

template <typename T>
Mat<T> output_logits(const Parameters<T>& params, const Mat<T>& h) {
  const Mat<T>& w = params.tied ? params.embedding : params.out_proj;
  return h * w.transpose();
}

}  // namespace

template <typename T>
std::vector<Mat<T>> Transformer<T>::forward(const Batch& b,
                                            const Dropout& drop) const {
  Trace<T> t;
  run_trace(cfg_, params_, pos_, b, drop, t);
  Mat<T> logits = output_logits(params_, t.h);
  std::vector<Mat<T>> out;
  out.reserve(b.items.size());
  for (int s = 0; s < t.dec.n_seqs(); ++s)
    out.push_back(logits.middleRows(t.dec.offset[s], t.dec.len(s)));
  return out;
}

template <typename T>
typename Transformer<T>::LossStats Transformer<T>::backward(
    const Batch& b, const Dropout& drop, T label_smoothing, T loss_scale,
    Parameters<T>& grads) const {
  using I = typename Transformer<T>::Impl;
  for (const auto& it : b.items)
    if (it.decoder_input_ids.size() != it.target_ids.size())
      throw ValidationError("decoder input and target lengths differ");

  Trace<T> t;
  run_trace(cfg_, params_, pos_, b, drop, t);
  Mat<T> logits = output_logits(params_, t.h);

  // Label-smoothed NLL, summed over non-pad target rows; dlogits in place.
  const int v = cfg_.vocab_size;
  const T eps = label_smoothing;
  LossStats stats;
  std::vector<TokenId> flat_targets;
  flat_targets.reserve(static_cast<size_t>(t.dec.rows()));
  for (const auto& it : b.items)
    flat_targets.insert(flat_targets.end(), it.target_ids.begin(),
                        it.target_ids.end());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    TokenId y = flat_targets[static_cast<size_t>(r)];
    auto row = logits.row(r);
    if (y == Vocabulary::kPad) {
      row.setZero();
      continue;
    }
    if (y < 0 || y >= v)
      throw ValidationError("target id " + std::to_string(y) + " out of range");
    T m = row.maxCoeff();
    T sum_exp = (row.array() - m).exp().sum();
    T lse = m + std::log(sum_exp);
    T sum_l = row.sum();
    T ly = row(y);
    stats.loss_sum += static_cast<double>(
        -(T(1) - eps) * (ly - lse) - (eps / T(v)) * (sum_l - T(v) * lse));
    stats.tokens += 1;
    row = ((row.array() - lse).exp() - eps / T(v)) * loss_scale;
    row(y) -= (T(1) - eps) * loss_scale;
  }
  if (stats.tokens == 0)
    throw ValidationError("batch has no non-pad target positions");

  // Output projection.
  const Mat<T>& w_out = params_.tied ? params_.embedding : params_.out_proj;
  Mat<T> dh = logits * w_out;
  {
    Mat<T>& gw = params_.tied ? grads.embedding : grads.out_proj;
    gw.noalias() += logits.transpose() * t.h;
  }

  // Decoder stack.
  Mat<T> dy = norm_backward(dh, params_.dec_ln, t.dec_ln, grads.dec_ln);
  Mat<T> dmem = Mat<T>::Zero(t.memory.rows(), cfg_.d_model);
  for (int l = static_cast<int>(params_.dec.size()) - 1; l >= 0; --l) {
    auto& lt = t.dec_l[static_cast<size_t>(l)];
    const auto& lp = params_.dec[static_cast<size_t>(l)];
    auto& lg = grads.dec[static_cast<size_t>(l)];
    const uint64_t base = kSlotDec + 10 * static_cast<uint64_t>(l);
    Mat<T> dffn = dy;
    I::drop_site(drop, dffn, base + 4);
    Mat<T> dg = linear_backward(dffn, lt.g, lp.ff2, lg.ff2);
    Mat<T> du = dg;
    {
      T* pu = lt.u.data();
      T* pd = du.data();
      for (Eigen::Index i = 0; i < du.size(); ++i) pd[i] *= gelu_grad_val(pu[i]);
    }
    Mat<T> df = linear_backward(du, lt.f, lp.ff1, lg.ff1);
    Mat<T> dx2 = dy + norm_backward(df, lp.ln3, lt.n3, lg.ln3);

    Mat<T> dca = dx2;
    I::drop_site(drop, dca, base + 3);
    AttnShape cross_sh{&t.dec.offset, &t.enc.offset, &t.enc.ids, nullptr, false};
    Mat<T> dc = I::mha_backward(cfg_, lp.cross_attn, lt.c, t.memory, cross_sh,
                                drop, base + 2, b.item_base, lt.cross, dca,
                                lg.cross_attn, dmem);
    Mat<T> dx1 = dx2 + norm_backward(dc, lp.ln2, lt.n2, lg.ln2);

    Mat<T> dsa = dx1;
    I::drop_site(drop, dsa, base + 1);
    AttnShape self_sh{&t.dec.offset, &t.dec.offset, &t.dec.ids, nullptr, true};
    Mat<T> dself_kv = Mat<T>::Zero(lt.a.rows(), cfg_.d_model);
    Mat<T> da = I::mha_backward(cfg_, lp.self_attn, lt.a, lt.a, self_sh, drop,
                                base + 0, b.item_base, lt.self_attn, dsa,
                                lg.self_attn, dself_kv);
    da += dself_kv;
    dy = dx1 + norm_backward(da, lp.ln1, lt.n1, lg.ln1);
  }
  // Decoder embedding.
  I::drop_site(drop, dy, kSlotEmbDec);
  {
    const T sqrt_d = std::sqrt(T(cfg_.d_model));
    for (int r = 0; r < t.dec.rows(); ++r)
      grads.embedding.row(t.dec.ids[static_cast<size_t>(r)]) +=
          dy.row(r) * sqrt_d;
  }

  // Encoder stack, fed by accumulated memory gradient.
  Mat<T> dx = norm_backward(dmem, params_.enc_ln, t.enc_ln, grads.enc_ln);
  for (int l = static_cast<int>(params_.enc.size()) - 1; l >= 0; --l) {
    auto& lt = t.enc_l[static_cast<size_t>(l)];
    const auto& lp = params_.enc[static_cast<size_t>(l)];
    auto& lg = grads.enc[static_cast<size_t>(l)];
    const uint64_t base = kSlotEnc + 10 * static_cast<uint64_t>(l);
    Mat<T> dffn = dx;
    I::drop_site(drop, dffn, base + 2);
    Mat<T> dg = linear_backward(dffn, lt.g, lp.ff2, lg.ff2);
    Mat<T> du = dg;
    {
      T* pu = lt.u.data();
      T* pd = du.data();
      for (Eigen::Index i = 0; i < du.size(); ++i) pd[i] *= gelu_grad_val(pu[i]);
    }
    Mat<T> df = linear_backward(du, lt.f, lp.ff1, lg.ff1);
    Mat<T> dx_mid = dx + norm_backward(df, lp.ln2, lt.n2, lg.ln2);

    Mat<T> dao = dx_mid;
    I::drop_site(drop, dao, base + 1);
    AttnShape sh{&t.enc.offset, &t.enc.offset, &t.enc.ids, nullptr, false};
    Mat<T> dkv = Mat<T>::Zero(lt.a.rows(), cfg_.d_model);
    Mat<T> da = I::mha_backward(cfg_, lp.attn, lt.a, lt.a, sh, drop, base + 0,
                                b.item_base, lt.attn, dao, lg.attn, dkv);
    da += dkv;
    dx = dx_mid + norm_backward(da, lp.ln1, lt.n1, lg.ln1);
  }
  I::drop_site(drop, dx, kSlotEmbEnc);
  {
    const T sqrt_d = std::sqrt(T(cfg_.d_model));
    for (int r = 0; r < t.enc.rows(); ++r)
      grads.embedding.row(t.enc.ids[static_cast<size_t>(r)]) +=
          dx.row(r) * sqrt_d;
  }

  if (auto bad = grads.first_nonfinite())
    throw RuntimeFailure("non-finite gradient in parameter " + *bad);
  return stats;
}

template <typename T>
typename Transformer<T>::Memory Transformer<T>::encode(
    const std::vector<std::vector<TokenId>>& enc_ids) const {
  using I = typename Transformer<T>::Impl;
  Memory mem;
  Pack pack = build_pack<T>(enc_ids, cfg_);
  Mat<T> x = embed_pack(pack, params_, pos_, cfg_.d_model);
  Dropout off{};
  for (const auto& lp : params_.enc) {
    NormCache<T> n1, n2;
    Mat<T> a = norm_forward(x, lp.ln1, n1);
    AttnShape sh{&pack.offset, &pack.offset, &pack.ids, nullptr, false};
    x += I::mha_forward(cfg_, lp.attn, a, a, sh, off, 0, 0, nullptr);
    Mat<T> f = norm_forward(x, lp.ln2, n2);
    x += linear_forward(gelu_mat(linear_forward(f, lp.ff1)), lp.ff2);
  }
  NormCache<T> nf;
  mem.rows = norm_forward(x, params_.enc_ln, nf);
  mem.offset = pack.offset;
  mem.ids = pack.ids;
  for (const auto& lp : params_.dec) {
    mem.cross_k.push_back(linear_forward(mem.rows, lp.cross_attn.k));
    mem.cross_v.push_back(linear_forward(mem.rows, lp.cross_attn.v));
  }
  return mem;
}

template <typename T>
Mat<T> Transformer<T>::decode_last_logits(
    const Memory& mem, const std::vector<std::vector<TokenId>>& prefixes,
    const std::vector<int>& index) const {
  using I = typename Transformer<T>::Impl;
  if (prefixes.size() != index.size())
    throw ValidationError("decode: prefixes and index size mismatch");
  Pack pack = build_pack<T>(prefixes, cfg_);
  Mat<T> y = embed_pack(pack, params_, pos_, cfg_.d_model);
  Dropout off{};
  for (size_t l = 0; l < params_.dec.size(); ++l) {
    const auto& lp = params_.dec[l];
    NormCache<T> n1, n2, n3;
    Mat<T> a = norm_forward(y, lp.ln1, n1);
    AttnShape self_sh{&pack.offset, &pack.offset, &pack.ids, nullptr, true};
    y += I::mha_forward(cfg_, lp.self_attn, a, a, self_sh, off, 0, 0, nullptr);
    Mat<T> c = norm_forward(y, lp.ln2, n2);
    AttnShape cross_sh{&pack.offset, &mem.offset, &mem.ids, &index, false};
    y += I::mha_forward(cfg_, lp.cross_attn, c, mem.rows, cross_sh, off, 0, 0,
                        nullptr, &mem.cross_k[l], &mem.cross_v[l]);
    Mat<T> f = norm_forward(y, lp.ln3, n3);
    y += linear_forward(gelu_mat(linear_forward(f, lp.ff1)), lp.ff2);
  }
  NormCache<T> nf;
  Mat<T> h = norm_forward(y, params_.dec_ln, nf);
  Mat<T> last(pack.n_seqs(), cfg_.d_model);
  for (int s = 0; s < pack.n_seqs(); ++s) last.row(s) = h.row(pack.offset[s + 1] - 1);
  return output_logits(params_, last);
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace minimt::model
