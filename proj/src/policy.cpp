// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "postlab/rng.hpp"

namespace postlab {
namespace {

// Dot product with a fixed accumulation order. The lane array keeps the loop
// vectorisable without -ffast-math; results are bit-stable for a given build.
template <typename T>
T vdot(const T* a, const T* b, int64_t n) {
  constexpr int64_t kLanes = 16;
  T acc[kLanes] = {};
  int64_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (int64_t j = 0; j < kLanes; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail = T(0);
  for (; i < n; ++i) tail += a[i] * b[i];
  for (int64_t w = kLanes / 2; w > 0; w /= 2) {
    for (int64_t j = 0; j < w; ++j) acc[j] += acc[j + w];
  }
  return acc[0] + tail;
}

template <typename T>
void vaxpy(T* y, T alpha, const T* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

template <typename T>
T gelu(T x) {
  const T u = T(kGeluK) * (x + T(kGeluC) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  const T x2 = x * x;
  const T u = T(kGeluK) * (x + T(kGeluC) * x * x2);
  const T th = std::tanh(u);
  const T sech2 = T(1) - th * th;
  return T(0.5) * (T(1) + th) +
         T(0.5) * x * sech2 * T(kGeluK) * (T(1) + T(3.0 * kGeluC) * x2);
}

// Per-row LayerNorm. Statistics accumulate in double so the float and double
// instantiations agree closely.
template <typename T>
void layernorm_row(const T* x, const T* g, const T* b, int n, T* y, T* mean_out,
                   T* rstd_out) {
  double mu = 0.0;
  for (int i = 0; i < n; ++i) mu += static_cast<double>(x[i]);
  mu /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - mu;
    var += d * d;
  }
  var /= n;
  const double rstd = 1.0 / std::sqrt(var + 1e-5);
  for (int i = 0; i < n; ++i) {
    y[i] = T((static_cast<double>(x[i]) - mu) * rstd) * g[i] + b[i];
  }
  *mean_out = T(mu);
  *rstd_out = T(rstd);
}

template <typename T>
void layernorm_bwd_row(const T* x, const T* g, T mean, T rstd, const T* dy, int n,
                       T* dx, T* dg, T* db) {
  double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
  for (int i = 0; i < n; ++i) {
    const T xhat = (x[i] - mean) * rstd;
    const T dxhat = dy[i] * g[i];
    sum_dxhat += static_cast<double>(dxhat);
    sum_dxhat_xhat += static_cast<double>(dxhat) * static_cast<double>(xhat);
  }
  const T m1 = T(sum_dxhat / n);
  const T m2 = T(sum_dxhat_xhat / n);
  for (int i = 0; i < n; ++i) {
    const T xhat = (x[i] - mean) * rstd;
    const T dxhat = dy[i] * g[i];
    dx[i] += rstd * (dxhat - m1 - xhat * m2);
    dg[i] += dy[i] * xhat;
    db[i] += dy[i];
  }
}

template <typename T>
void log_softmax_row(const T* logits, int n, T* out) {
  T mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(static_cast<double>(logits[i] - mx));
  const double lse = static_cast<double>(mx) + std::log(s);
  for (int i = 0; i < n; ++i) out[i] = T(static_cast<double>(logits[i]) - lse);
}

template <typename T>
void softmax_inplace(T* s, int n) {
  T mx = s[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, s[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = std::exp(static_cast<double>(s[i] - mx));
    s[i] = T(e);
    sum += e;
  }
  for (int i = 0; i < n; ++i) s[i] = T(static_cast<double>(s[i]) / sum);
}

// y[o] = b[o] + W.row(o) . x for o in [0, out_dim)
template <typename T>
void linear_row(const TensorT<T>& W, const T* bias, const T* x, T* y) {
  const int64_t out_dim = W.shape[0];
  const int64_t in_dim = W.shape[1];
  for (int64_t o = 0; o < out_dim; ++o) {
    y[o] = (bias ? bias[o] : T(0)) + vdot(W.row(o), x, in_dim);
  }
}

constexpr int kEos = 0;

std::string layer_key(int layer, const char* suffix) {
  return "layers." + std::to_string(layer) + "." + suffix;
}

// Incremental decoder with per-layer key/value caches. Used for sampling and
// for scoring paths that do not need gradients.
template <typename T>
class Decoder {
 public:
  Decoder(const PolicyConfig& cfg, const ParameterSetT<T>& params)
      : cfg_(cfg), p_(params) {
    const int64_t ce = int64_t(cfg.context_len) * cfg.embed_dim;
    kc_.assign(cfg.num_layers, std::vector<T>(ce));
    vc_.assign(cfg.num_layers, std::vector<T>(ce));
    logits_.resize(cfg.vocab_size);
    x_.resize(cfg.embed_dim);
    xn_.resize(cfg.embed_dim);
    qkv_.resize(3 * cfg.embed_dim);
    ao_.resize(cfg.embed_dim);
    proj_.resize(cfg.embed_dim);
    z1_.resize(cfg.mlp_dim());
    att_.resize(cfg.context_len);
  }

  int pos() const { return pos_; }

  const std::vector<T>& feed(int token) {
    const int E = cfg_.embed_dim;
    const int hd = cfg_.head_dim();
    const T scale = T(1) / T(std::sqrt(static_cast<double>(hd)));
    if (token < 0 || token >= cfg_.vocab_size)
      throw std::out_of_range("token id outside vocabulary");
    if (pos_ >= cfg_.context_len) throw std::out_of_range("context window exhausted");

    const T* te = p_.at("tok_emb").row(token);
    const T* pe = p_.at("pos_emb").row(pos_);
    for (int i = 0; i < E; ++i) x_[i] = te[i] + pe[i];

    T mean, rstd;
    for (int l = 0; l < cfg_.num_layers; ++l) {
      layernorm_row(x_.data(), p_.at(layer_key(l, "ln1.g")).data.data(),
                    p_.at(layer_key(l, "ln1.b")).data.data(), E, xn_.data(), &mean,
                    &rstd);
      linear_row(p_.at(layer_key(l, "attn.wqkv")),
                 p_.at(layer_key(l, "attn.bqkv")).data.data(), xn_.data(),
                 qkv_.data());
      std::memcpy(kc_[l].data() + int64_t(pos_) * E, qkv_.data() + E, E * sizeof(T));
      std::memcpy(vc_[l].data() + int64_t(pos_) * E, qkv_.data() + 2 * E,
                  E * sizeof(T));
      for (int h = 0; h < cfg_.num_heads; ++h) {
        const T* q = qkv_.data() + h * hd;
        for (int u = 0; u <= pos_; ++u) {
          att_[u] = vdot(q, kc_[l].data() + int64_t(u) * E + h * hd, hd) * scale;
        }
        softmax_inplace(att_.data(), pos_ + 1);
        T* out = ao_.data() + h * hd;
        std::fill(out, out + hd, T(0));
        for (int u = 0; u <= pos_; ++u) {
          vaxpy(out, att_[u], vc_[l].data() + int64_t(u) * E + h * hd, hd);
        }
      }
      linear_row(p_.at(layer_key(l, "attn.wo")),
                 p_.at(layer_key(l, "attn.bo")).data.data(), ao_.data(),
                 proj_.data());
      for (int i = 0; i < E; ++i) x_[i] += proj_[i];

      layernorm_row(x_.data(), p_.at(layer_key(l, "ln2.g")).data.data(),
                    p_.at(layer_key(l, "ln2.b")).data.data(), E, xn_.data(), &mean,
                    &rstd);
      linear_row(p_.at(layer_key(l, "mlp.w1")),
                 p_.at(layer_key(l, "mlp.b1")).data.data(), xn_.data(), z1_.data());
      for (auto& z : z1_) z = gelu(z);
      linear_row(p_.at(layer_key(l, "mlp.w2")),
                 p_.at(layer_key(l, "mlp.b2")).data.data(), z1_.data(),
                 proj_.data());
      for (int i = 0; i < E; ++i) x_[i] += proj_[i];
    }
    layernorm_row(x_.data(), p_.at("ln_f.g").data.data(),
                  p_.at("ln_f.b").data.data(), E, xn_.data(), &mean, &rstd);
    linear_row(p_.at("head.w"), static_cast<const T*>(nullptr), xn_.data(), logits_.data());
    ++pos_;
    return logits_;
  }

 private:
  const PolicyConfig& cfg_;
  const ParameterSetT<T>& p_;
  std::vector<std::vector<T>> kc_, vc_;
  std::vector<T> logits_, x_, xn_, qkv_, ao_, proj_, z1_, att_;
  int pos_ = 0;
};

void check_tokens(std::span<const int> toks, int vocab, const char* what) {
  for (int t : toks) {
    if (t < 0 || t >= vocab)
      throw std::out_of_range(std::string(what) + ": token id outside vocabulary");
  }
}

}  // namespace

void PolicyConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (context_len < 2) throw std::invalid_argument("context_len must be >= 2");
  if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (num_heads < 1) throw std::invalid_argument("num_heads must be >= 1");
  if (embed_dim % num_heads != 0)
    throw std::invalid_argument("embed_dim must be divisible by num_heads");
}

void DecodingConfig::validate() const {
  if (!greedy && temperature <= 0.0)
    throw std::invalid_argument("temperature must be positive");
  if (top_p <= 0.0 || top_p > 1.0)
    throw std::invalid_argument("top_p must be in (0, 1]");
  if (top_k < 0) throw std::invalid_argument("top_k must be >= 0");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
}

template <typename T>
double ScoredT<T>::entropy() const {
  double total = 0.0;
  for (const auto& row : log_dists) {
    double h = 0.0;
    for (T lp : row) h -= std::exp(static_cast<double>(lp)) * static_cast<double>(lp);
    total += h;
  }
  return log_dists.empty() ? 0.0 : total / static_cast<double>(log_dists.size());
}

template <typename T>
PolicyT<T>::PolicyT(const PolicyConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
}

template <typename T>
ParameterSetT<T> PolicyT<T>::init_params() const {
  const int E = cfg_.embed_dim;
  const int H = cfg_.mlp_dim();
  ParameterSetT<T> p;
  Rng rng(cfg_.init_seed);
  auto gauss = [&rng](TensorT<T>& t) {
    for (T& v : t.data) v = T(0.02 * rng.gaussian());
  };
  auto ones = [](TensorT<T>& t) { std::fill(t.data.begin(), t.data.end(), T(1)); };

  gauss(p.add("tok_emb", {cfg_.vocab_size, E}));
  gauss(p.add("pos_emb", {cfg_.context_len, E}));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    ones(p.add(layer_key(l, "ln1.g"), {E}));
    p.add(layer_key(l, "ln1.b"), {E});
    gauss(p.add(layer_key(l, "attn.wqkv"), {3 * E, E}));
    p.add(layer_key(l, "attn.bqkv"), {3 * E});
    gauss(p.add(layer_key(l, "attn.wo"), {E, E}));
    p.add(layer_key(l, "attn.bo"), {E});
    ones(p.add(layer_key(l, "ln2.g"), {E}));
    p.add(layer_key(l, "ln2.b"), {E});
    gauss(p.add(layer_key(l, "mlp.w1"), {H, E}));
    p.add(layer_key(l, "mlp.b1"), {H});
    gauss(p.add(layer_key(l, "mlp.w2"), {E, H}));
    p.add(layer_key(l, "mlp.b2"), {E});
  }
  ones(p.add("ln_f.g", {E}));
  p.add("ln_f.b", {E});
  gauss(p.add("head.w", {cfg_.vocab_size, E}));
  return p;
}

template <typename T>
std::vector<std::vector<T>> PolicyT<T>::response_log_dists(
    const ParameterSetT<T>& params, std::span<const int> prompt,
    std::span<const int> response) const {
  if (prompt.empty()) throw std::invalid_argument("prompt must be non-empty");
  if (response.empty()) throw std::invalid_argument("response must be non-empty");
  check_tokens(prompt, cfg_.vocab_size, "prompt");
  check_tokens(response, cfg_.vocab_size, "response");
  const int64_t t_in = int64_t(prompt.size()) + int64_t(response.size()) - 1;
  if (t_in > cfg_.context_len)
    throw std::out_of_range("prompt+response exceed the context window");

  Decoder<T> dec(cfg_, params);
  std::vector<std::vector<T>> out;
  out.reserve(response.size());
  auto emit = [&](const std::vector<T>& logits) {
    std::vector<T> row(cfg_.vocab_size);
    log_softmax_row(logits.data(), cfg_.vocab_size, row.data());
    out.push_back(std::move(row));
  };
  for (size_t i = 0; i + 1 < prompt.size(); ++i) dec.feed(prompt[i]);
  emit(dec.feed(prompt.back()));
  for (size_t j = 0; j + 1 < response.size(); ++j) emit(dec.feed(response[j]));
  return out;
}

template <typename T>
std::vector<T> PolicyT<T>::response_log_probs(const ParameterSetT<T>& params,
                                              std::span<const int> prompt,
                                              std::span<const int> response) const {
  auto dists = response_log_dists(params, prompt, response);
  std::vector<T> out(response.size());
  for (size_t j = 0; j < response.size(); ++j) out[j] = dists[j][response[j]];
  return out;
}

template <typename T>
SampleResult PolicyT<T>::sample(const ParameterSetT<T>& params,
                                std::span<const int> prompt,
                                const DecodingConfig& dec) const {
  dec.validate();
  if (prompt.empty()) throw std::invalid_argument("prompt must be non-empty");
  check_tokens(prompt, cfg_.vocab_size, "prompt");
  if (static_cast<int>(prompt.size()) > cfg_.context_len)
    throw std::out_of_range("prompt exceeds the context window");

  Decoder<T> state(cfg_, params);
  for (size_t i = 0; i + 1 < prompt.size(); ++i) state.feed(prompt[i]);
  const std::vector<T>* logits = &state.feed(prompt.back());

  Rng rng(dec.seed);
  const int V = cfg_.vocab_size;
  std::vector<T> log_dist(V);
  std::vector<int> order(V);
  std::vector<double> probs(V);

  SampleResult res;
  const int budget =
      std::min<int>(dec.max_new_tokens, cfg_.context_len - int(prompt.size()) + 1);
  res.truncated = true;
  for (int step = 0; step < budget; ++step) {
    log_softmax_row(logits->data(), V, log_dist.data());
    int chosen;
    if (dec.greedy) {
      chosen = int(std::max_element(logits->begin(), logits->end()) -
                   logits->begin());
    } else {
      double mx = -1e300;
      for (int v = 0; v < V; ++v)
        mx = std::max(mx, static_cast<double>((*logits)[v]) / dec.temperature);
      double sum = 0.0;
      for (int v = 0; v < V; ++v) {
        probs[v] = std::exp(static_cast<double>((*logits)[v]) / dec.temperature - mx);
        sum += probs[v];
      }
      for (int v = 0; v < V; ++v) probs[v] /= sum;
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
      });
      int kept = V;
      if (dec.top_k > 0 && dec.top_k < V) kept = dec.top_k;
      double cum = 0.0;
      int nucleus = kept;
      for (int i = 0; i < kept; ++i) {
        cum += probs[order[i]];
        if (cum >= dec.top_p) {
          nucleus = i + 1;
          break;
        }
      }
      double mass = 0.0;
      for (int i = 0; i < nucleus; ++i) mass += probs[order[i]];
      const double u = rng.uniform() * mass;
      double acc = 0.0;
      chosen = order[nucleus - 1];
      for (int i = 0; i < nucleus; ++i) {
        acc += probs[order[i]];
        if (u < acc) {
          chosen = order[i];
          break;
        }
      }
    }
    res.tokens.push_back(chosen);
    res.log_probs.push_back(static_cast<float>(log_dist[chosen]));
    if (chosen == kEos) {
      res.truncated = false;
      break;
    }
    if (step + 1 < budget) logits = &state.feed(chosen);
  }
  return res;
}

template <typename T>
ScoredT<T> PolicyT<T>::score(const ParameterSetT<T>& params,
                             std::span<const int> prompt,
                             std::span<const int> response) const {
  if (prompt.empty()) throw std::invalid_argument("prompt must be non-empty");
  if (response.empty()) throw std::invalid_argument("response must be non-empty");
  check_tokens(prompt, cfg_.vocab_size, "prompt");
  check_tokens(response, cfg_.vocab_size, "response");

  const int P = int(prompt.size());
  const int R = int(response.size());
  const int T_in = P + R - 1;
  if (T_in > cfg_.context_len)
    throw std::out_of_range("prompt+response exceed the context window");
  const int E = cfg_.embed_dim;
  const int H = cfg_.mlp_dim();
  const int V = cfg_.vocab_size;
  const int heads = cfg_.num_heads;
  const int hd = cfg_.head_dim();
  const T scale = T(1) / T(std::sqrt(static_cast<double>(hd)));

  ScoredT<T> s;
  s.prompt_len = P;
  s.response.assign(response.begin(), response.end());
  s.inputs.assign(prompt.begin(), prompt.end());
  s.inputs.insert(s.inputs.end(), response.begin(), response.end() - 1);

  std::vector<T> x(size_t(T_in) * E);
  const auto& tok_emb = params.at("tok_emb");
  const auto& pos_emb = params.at("pos_emb");
  for (int t = 0; t < T_in; ++t) {
    const T* te = tok_emb.row(s.inputs[t]);
    const T* pe = pos_emb.row(t);
    T* xr = x.data() + size_t(t) * E;
    for (int i = 0; i < E; ++i) xr[i] = te[i] + pe[i];
  }

  s.layers.resize(cfg_.num_layers);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    auto& C = s.layers[l];
    C.x_in = x;
    C.ln1_mean.resize(T_in);
    C.ln1_rstd.resize(T_in);
    C.l1.resize(size_t(T_in) * E);
    const T* g1 = params.at(layer_key(l, "ln1.g")).data.data();
    const T* b1 = params.at(layer_key(l, "ln1.b")).data.data();
    for (int t = 0; t < T_in; ++t) {
      layernorm_row(C.x_in.data() + size_t(t) * E, g1, b1, E,
                    C.l1.data() + size_t(t) * E, &C.ln1_mean[t], &C.ln1_rstd[t]);
    }
    C.qkv.resize(size_t(T_in) * 3 * E);
    const auto& wqkv = params.at(layer_key(l, "attn.wqkv"));
    const T* bqkv = params.at(layer_key(l, "attn.bqkv")).data.data();
    for (int t = 0; t < T_in; ++t) {
      linear_row(wqkv, bqkv, C.l1.data() + size_t(t) * E,
                 C.qkv.data() + size_t(t) * 3 * E);
    }
    C.att.assign(size_t(heads) * T_in * T_in, T(0));
    C.ao.assign(size_t(T_in) * E, T(0));
    for (int h = 0; h < heads; ++h) {
      for (int t = 0; t < T_in; ++t) {
        T* arow = C.att.data() + (size_t(h) * T_in + t) * T_in;
        const T* q = C.qkv.data() + size_t(t) * 3 * E + h * hd;
        for (int u = 0; u <= t; ++u) {
          arow[u] = vdot(q, C.qkv.data() + size_t(u) * 3 * E + E + h * hd, hd) * scale;
        }
        softmax_inplace(arow, t + 1);
        T* out = C.ao.data() + size_t(t) * E + h * hd;
        for (int u = 0; u <= t; ++u) {
          vaxpy(out, arow[u], C.qkv.data() + size_t(u) * 3 * E + 2 * E + h * hd, hd);
        }
      }
    }
    const auto& wo = params.at(layer_key(l, "attn.wo"));
    const T* bo = params.at(layer_key(l, "attn.bo")).data.data();
    std::vector<T> tmp(E);
    for (int t = 0; t < T_in; ++t) {
      linear_row(wo, bo, C.ao.data() + size_t(t) * E, tmp.data());
      T* xr = x.data() + size_t(t) * E;
      for (int i = 0; i < E; ++i) xr[i] += tmp[i];
    }
    C.x_mid = x;
    C.ln2_mean.resize(T_in);
    C.ln2_rstd.resize(T_in);
    C.l2.resize(size_t(T_in) * E);
    const T* g2 = params.at(layer_key(l, "ln2.g")).data.data();
    const T* b2 = params.at(layer_key(l, "ln2.b")).data.data();
    for (int t = 0; t < T_in; ++t) {
      layernorm_row(C.x_mid.data() + size_t(t) * E, g2, b2, E,
                    C.l2.data() + size_t(t) * E, &C.ln2_mean[t], &C.ln2_rstd[t]);
    }
    C.z1.resize(size_t(T_in) * H);
    const auto& w1 = params.at(layer_key(l, "mlp.w1"));
    const T* mb1 = params.at(layer_key(l, "mlp.b1")).data.data();
    const auto& w2 = params.at(layer_key(l, "mlp.w2"));
    const T* mb2 = params.at(layer_key(l, "mlp.b2")).data.data();
    std::vector<T> a1(H);
    for (int t = 0; t < T_in; ++t) {
      linear_row(w1, mb1, C.l2.data() + size_t(t) * E, C.z1.data() + size_t(t) * H);
      const T* z = C.z1.data() + size_t(t) * H;
      for (int i = 0; i < H; ++i) a1[i] = gelu(z[i]);
      linear_row(w2, mb2, a1.data(), tmp.data());
      T* xr = x.data() + size_t(t) * E;
      for (int i = 0; i < E; ++i) xr[i] += tmp[i];
    }
  }
  s.x_final = std::move(x);

  s.lnf_mean.resize(R);
  s.lnf_rstd.resize(R);
  s.lf.resize(size_t(R) * E);
  s.probs.resize(size_t(R) * V);
  s.log_probs.resize(R);
  s.log_dists.assign(R, std::vector<T>(V));
  const T* gf = params.at("ln_f.g").data.data();
  const T* bf = params.at("ln_f.b").data.data();
  const auto& head = params.at("head.w");
  std::vector<T> logits(V);
  for (int j = 0; j < R; ++j) {
    const int p = P - 1 + j;
    layernorm_row(s.x_final.data() + size_t(p) * E, gf, bf, E,
                  s.lf.data() + size_t(j) * E, &s.lnf_mean[j], &s.lnf_rstd[j]);
    linear_row(head, static_cast<const T*>(nullptr), s.lf.data() + size_t(j) * E, logits.data());
    log_softmax_row(logits.data(), V, s.log_dists[j].data());
    T* pr = s.probs.data() + size_t(j) * V;
    for (int v = 0; v < V; ++v) pr[v] = std::exp(s.log_dists[j][v]);
    s.log_probs[j] = s.log_dists[j][response[j]];
  }
  return s;
}

template <typename T>
ParameterSetT<T> PolicyT<T>::backward(const ScoredT<T>& s,
                                      const ParameterSetT<T>& params,
                                      std::span<const T> weights) const {
  const int P = s.prompt_len;
  const int R = int(s.response.size());
  const int T_in = int(s.inputs.size());
  if (int(weights.size()) != R)
    throw std::invalid_argument("weights must have one entry per response token");
  const int E = cfg_.embed_dim;
  const int H = cfg_.mlp_dim();
  const int V = cfg_.vocab_size;
  const int heads = cfg_.num_heads;
  const int hd = cfg_.head_dim();
  const T scale = T(1) / T(std::sqrt(static_cast<double>(hd)));

  ParameterSetT<T> g;
  for (const auto& t : params) g.add(t.name, t.shape);

  std::vector<T> dx(size_t(T_in) * E, T(0));

  // readout and final norm, only at positions that produce a loss token
  {
    auto& dhead = g.at("head.w");
    const auto& head = params.at("head.w");
    T* dgf = g.at("ln_f.g").data.data();
    T* dbf = g.at("ln_f.b").data.data();
    const T* gf = params.at("ln_f.g").data.data();
    std::vector<T> dlogits(V), dlf(E);
    for (int j = 0; j < R; ++j) {
      const T w = weights[j];
      if (w == T(0)) continue;
      const int p = P - 1 + j;
      const T* pr = s.probs.data() + size_t(j) * V;
      for (int v = 0; v < V; ++v) dlogits[v] = w * pr[v];
      dlogits[s.response[j]] -= w;
      std::fill(dlf.begin(), dlf.end(), T(0));
      const T* lf = s.lf.data() + size_t(j) * E;
      for (int v = 0; v < V; ++v) {
        vaxpy(dlf.data(), dlogits[v], head.row(v), E);
        vaxpy(dhead.row(v), dlogits[v], lf, E);
      }
      layernorm_bwd_row(s.x_final.data() + size_t(p) * E, gf, s.lnf_mean[j],
                        s.lnf_rstd[j], dlf.data(), E, dx.data() + size_t(p) * E,
                        dgf, dbf);
    }
  }

  std::vector<T> dmid(size_t(T_in) * E);
  std::vector<T> din(size_t(T_in) * E);
  std::vector<T> a1(H), da1(H), dz1(H), dl2(E), dao(size_t(T_in) * E), dl1(E);
  std::vector<T> dqkv(size_t(T_in) * 3 * E), da(T_in);

  for (int l = cfg_.num_layers - 1; l >= 0; --l) {
    const auto& C = s.layers[l];
    // mlp block: x = x_mid + w2 * gelu(w1 * ln2(x_mid) + b1) + b2
    dmid = dx;  // residual branch
    auto& dw1 = g.at(layer_key(l, "mlp.w1"));
    auto& dw2 = g.at(layer_key(l, "mlp.w2"));
    T* db1 = g.at(layer_key(l, "mlp.b1")).data.data();
    T* db2 = g.at(layer_key(l, "mlp.b2")).data.data();
    const auto& w1 = params.at(layer_key(l, "mlp.w1"));
    const auto& w2 = params.at(layer_key(l, "mlp.w2"));
    const T* g2 = params.at(layer_key(l, "ln2.g")).data.data();
    T* dg2 = g.at(layer_key(l, "ln2.g")).data.data();
    T* db2n = g.at(layer_key(l, "ln2.b")).data.data();
    for (int t = 0; t < T_in; ++t) {
      const T* dz2 = dx.data() + size_t(t) * E;
      const T* z = C.z1.data() + size_t(t) * H;
      for (int i = 0; i < H; ++i) a1[i] = gelu(z[i]);
      std::fill(da1.begin(), da1.end(), T(0));
      for (int e = 0; e < E; ++e) {
        if (dz2[e] == T(0)) continue;
        vaxpy(dw2.row(e), dz2[e], a1.data(), H);
        vaxpy(da1.data(), dz2[e], w2.row(e), H);
        db2[e] += dz2[e];
      }
      for (int i = 0; i < H; ++i) dz1[i] = da1[i] * gelu_grad(z[i]);
      std::fill(dl2.begin(), dl2.end(), T(0));
      const T* l2row = C.l2.data() + size_t(t) * E;
      for (int h = 0; h < H; ++h) {
        if (dz1[h] == T(0)) continue;
        vaxpy(dw1.row(h), dz1[h], l2row, E);
        vaxpy(dl2.data(), dz1[h], w1.row(h), E);
        db1[h] += dz1[h];
      }
      layernorm_bwd_row(C.x_mid.data() + size_t(t) * E, g2, C.ln2_mean[t],
                        C.ln2_rstd[t], dl2.data(), E, dmid.data() + size_t(t) * E,
                        dg2, db2n);
    }

    // attention block: x_mid = x_in + wo * attend(qkv(ln1(x_in))) + bo
    din = dmid;  // residual branch
    auto& dwo = g.at(layer_key(l, "attn.wo"));
    T* dbo = g.at(layer_key(l, "attn.bo")).data.data();
    const auto& wo = params.at(layer_key(l, "attn.wo"));
    std::fill(dao.begin(), dao.end(), T(0));
    for (int t = 0; t < T_in; ++t) {
      const T* dpo = dmid.data() + size_t(t) * E;
      const T* aor = C.ao.data() + size_t(t) * E;
      T* daor = dao.data() + size_t(t) * E;
      for (int e = 0; e < E; ++e) {
        if (dpo[e] == T(0)) continue;
        vaxpy(dwo.row(e), dpo[e], aor, E);
        vaxpy(daor, dpo[e], wo.row(e), E);
        dbo[e] += dpo[e];
      }
    }
    std::fill(dqkv.begin(), dqkv.end(), T(0));
    for (int h = 0; h < heads; ++h) {
      for (int t = 0; t < T_in; ++t) {
        const T* arow = C.att.data() + (size_t(h) * T_in + t) * T_in;
        const T* dout = dao.data() + size_t(t) * E + h * hd;
        double sdot = 0.0;
        for (int u = 0; u <= t; ++u) {
          const T* vu = C.qkv.data() + size_t(u) * 3 * E + 2 * E + h * hd;
          da[u] = vdot(dout, vu, hd);
          vaxpy(dqkv.data() + size_t(u) * 3 * E + 2 * E + h * hd, arow[u], dout, hd);
          sdot += static_cast<double>(arow[u]) * static_cast<double>(da[u]);
        }
        const T* qt = C.qkv.data() + size_t(t) * 3 * E + h * hd;
        T* dqt = dqkv.data() + size_t(t) * 3 * E + h * hd;
        for (int u = 0; u <= t; ++u) {
          const T ds = arow[u] * (da[u] - T(sdot)) * scale;
          if (ds == T(0)) continue;
          vaxpy(dqt, ds, C.qkv.data() + size_t(u) * 3 * E + E + h * hd, hd);
          vaxpy(dqkv.data() + size_t(u) * 3 * E + E + h * hd, ds, qt, hd);
        }
      }
    }
    auto& dwqkv = g.at(layer_key(l, "attn.wqkv"));
    T* dbqkv = g.at(layer_key(l, "attn.bqkv")).data.data();
    const auto& wqkv = params.at(layer_key(l, "attn.wqkv"));
    const T* g1 = params.at(layer_key(l, "ln1.g")).data.data();
    T* dg1 = g.at(layer_key(l, "ln1.g")).data.data();
    T* db1n = g.at(layer_key(l, "ln1.b")).data.data();
    for (int t = 0; t < T_in; ++t) {
      const T* dq3 = dqkv.data() + size_t(t) * 3 * E;
      const T* l1row = C.l1.data() + size_t(t) * E;
      std::fill(dl1.begin(), dl1.end(), T(0));
      for (int o = 0; o < 3 * E; ++o) {
        if (dq3[o] == T(0)) continue;
        vaxpy(dwqkv.row(o), dq3[o], l1row, E);
        vaxpy(dl1.data(), dq3[o], wqkv.row(o), E);
        dbqkv[o] += dq3[o];
      }
      layernorm_bwd_row(C.x_in.data() + size_t(t) * E, g1, C.ln1_mean[t],
                        C.ln1_rstd[t], dl1.data(), E, din.data() + size_t(t) * E,
                        dg1, db1n);
    }
    dx = din;
  }

  auto& dtok = g.at("tok_emb");
  auto& dpos = g.at("pos_emb");
  for (int t = 0; t < T_in; ++t) {
    const T* dr = dx.data() + size_t(t) * E;
    vaxpy(dtok.row(s.inputs[t]), T(1), dr, E);
    vaxpy(dpos.row(t), T(1), dr, E);
  }
  return g;
}

template class PolicyT<float>;
template class PolicyT<double>;
template struct ScoredT<float>;
template struct ScoredT<double>;

}  // namespace postlab
