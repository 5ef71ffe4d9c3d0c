// Copyright 2026 The sparse-zo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "szo/models/mlp.hpp"
#include "szo/models/task.hpp"
#include "szo/noise.hpp"

namespace szo {

struct TransformerConfig {
  std::size_t vocab = 16;
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t seq_len = 16;
  std::size_t mlp_mult = 4;
  std::size_t n_train = 1000;
  std::size_t n_eval = 1000;
  // Probability that a token is followed by its fixed successor.
  double determinism = 0.8;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab < 2) throw ConfigError("vocab must be at least 2");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("d_model must be a positive multiple of n_heads");
    }
    if (seq_len == 0) throw ConfigError("seq_len must be positive");
    if (mlp_mult == 0) throw ConfigError("mlp_mult must be positive");
    if (n_train == 0 || n_eval == 0) throw ConfigError("splits must be non-empty");
    if (!(determinism >= 0.0 && determinism <= 1.0)) {
      throw ConfigError("determinism must lie in [0, 1]");
    }
  }
};

// Each sequence holds seq_len + 1 tokens; position t predicts token t + 1.
struct TokenData {
  std::size_t n = 0;
  std::size_t length = 0;
  std::vector<std::uint32_t> tokens;
};

// Markov chain: with probability `determinism` the next token is succ[a],
// otherwise uniform.
inline TokenData markov_sequences(const TransformerConfig& cfg, std::size_t n,
                                  std::uint64_t data_seed) {
  std::vector<std::uint32_t> succ(cfg.vocab);
  for (std::size_t a = 0; a < cfg.vocab; ++a) succ[a] = static_cast<std::uint32_t>(a);
  NoiseStream perm(hash_pair(cfg.seed, 0x7065726dull));
  for (std::size_t i = cfg.vocab - 1; i > 0; --i) {
    const auto j = std::min(i, static_cast<std::size_t>(perm.next_uniform() *
                                                        static_cast<double>(i + 1)));
    std::swap(succ[i], succ[j]);
  }
  TokenData d;
  d.n = n;
  d.length = cfg.seq_len + 1;
  d.tokens.resize(n * d.length);
  NoiseStream s(data_seed);
  const auto pick = [&](double u) {
    return static_cast<std::uint32_t>(
        std::min(cfg.vocab - 1, static_cast<std::size_t>(u * static_cast<double>(cfg.vocab))));
  };
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t tok = pick(s.next_uniform());
    d.tokens[i * d.length] = tok;
    for (std::size_t t = 1; t < d.length; ++t) {
      const double u = s.next_uniform();
      const double v = s.next_uniform();
      tok = u < cfg.determinism ? succ[tok] : pick(v);
      d.tokens[i * d.length + t] = tok;
    }
  }
  return d;
}

namespace transformer_detail {

inline double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

// Row-wise standardization (eps 1e-5) followed by fetched gain and bias.
template <Real T>
std::vector<double> layer_norm(const std::vector<double>& x, std::size_t rows,
                               std::size_t dim, LayerSource<T>& src,
                               std::size_t gain_id) {
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = &x[r * dim];
    double mean = 0.0;
    for (std::size_t j = 0; j < dim; ++j) mean += v[j];
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t j = 0; j < dim; ++j) var += (v[j] - mean) * (v[j] - mean);
    var /= static_cast<double>(dim);
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < dim; ++j) out[r * dim + j] = (v[j] - mean) * inv;
  }
  const auto gain = src.fetch(gain_id);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < dim; ++j) out[r * dim + j] *= static_cast<double>(gain[j]);
  }
  const auto bias = src.fetch(gain_id + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < dim; ++j) out[r * dim + j] += static_cast<double>(bias[j]);
  }
  return out;
}

}  // namespace transformer_detail

// One pre-norm transformer block (causal multi-head attention + GELU MLP)
// with learned token and position embeddings and a final norm, trained on
// next-token prediction.
template <Real T>
class TinyTransformerTask final : public Task<T> {
 public:
  enum Layer : std::size_t {
    kTokEmb, kPosEmb, kLn1Gain, kLn1Bias, kWq, kWk, kWv, kWo, kLn2Gain, kLn2Bias,
    kFc1W, kFc1B, kFc2W, kFc2B, kLnfGain, kLnfBias, kUnembed, kLayerCount
  };

  explicit TinyTransformerTask(TransformerConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    train_ = markov_sequences(cfg_, cfg_.n_train, hash_pair(cfg_.seed, 1));
    eval_ = markov_sequences(cfg_, cfg_.n_eval, hash_pair(cfg_.seed, 2));
    const std::size_t d = cfg_.d_model, v = cfg_.vocab, s = cfg_.seq_len;
    const std::size_t h = d * cfg_.mlp_mult;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(h));
    add_random("tok_emb", {v, d}, 1.0);
    add_random("pos_emb", {s, d}, 0.1);
    add_const("ln1.norm_gain", {d}, 1.0);
    add_const("ln1.norm_bias", {d}, 0.0);
    add_random("attn.wq", {d, d}, inv_sqrt_d);
    add_random("attn.wk", {d, d}, inv_sqrt_d);
    add_random("attn.wv", {d, d}, inv_sqrt_d);
    add_random("attn.wo", {d, d}, inv_sqrt_d);
    add_const("ln2.norm_gain", {d}, 1.0);
    add_const("ln2.norm_bias", {d}, 0.0);
    add_random("mlp.fc1.weight", {h, d}, inv_sqrt_d);
    add_const("mlp.fc1.bias", {h}, 0.0);
    add_random("mlp.fc2.weight", {d, h}, inv_sqrt_h);
    add_const("mlp.fc2.bias", {d}, 0.0);
    add_const("lnf.norm_gain", {d}, 1.0);
    add_const("lnf.norm_bias", {d}, 0.0);
    add_random("unembed", {v, d}, 0.02);
  }

  std::string name() const override { return "transformer"; }
  std::string describe() const override {
    return "transformer vocab=" + std::to_string(cfg_.vocab) +
           " d_model=" + std::to_string(cfg_.d_model) +
           " heads=" + std::to_string(cfg_.n_heads) +
           " seq_len=" + std::to_string(cfg_.seq_len) +
           " train=" + std::to_string(cfg_.n_train) +
           " eval=" + std::to_string(cfg_.n_eval) +
           " seed=" + std::to_string(cfg_.seed);
  }
  const ParameterSet<T>& initial() const override { return initial_; }
  void set_initial(ParameterSet<T> p) { initial_ = std::move(p); }
  std::size_t split_size(Split s) const override { return data(s).n; }
  const TransformerConfig& config() const noexcept { return cfg_; }
  const TokenData& data(Split s) const { return s == Split::kTrain ? train_ : eval_; }

  double loss(LayerSource<T>& src, const Batch& batch) const override {
    const auto logits = forward(src, batch);
    const auto& d = data(batch.split);
    const std::size_t v = cfg_.vocab, s = cfg_.seq_len;
    double sum = 0.0;
    for (std::size_t b = 0; b < batch.indices.size(); ++b) {
      const std::uint32_t* seq = &d.tokens[batch.indices[b] * d.length];
      for (std::size_t t = 0; t < s; ++t) {
        sum += mlp_detail::softmax_xent(&logits[(b * s + t) * v], v, seq[t + 1]);
      }
    }
    return sum / static_cast<double>(batch.indices.size() * s);
  }

  std::optional<double> accuracy(LayerSource<T>& src,
                                 const Batch& batch) const override {
    const auto logits = forward(src, batch);
    const auto& d = data(batch.split);
    const std::size_t v = cfg_.vocab, s = cfg_.seq_len;
    std::size_t hit = 0;
    for (std::size_t b = 0; b < batch.indices.size(); ++b) {
      const std::uint32_t* seq = &d.tokens[batch.indices[b] * d.length];
      for (std::size_t t = 0; t < s; ++t) {
        hit += mlp_detail::argmax(&logits[(b * s + t) * v], v) == seq[t + 1];
      }
    }
    return static_cast<double>(hit) / static_cast<double>(batch.indices.size() * s);
  }

  // Logits [batch * seq_len, vocab], consuming layers in order.
  std::vector<double> forward(LayerSource<T>& src, const Batch& batch) const {
    using transformer_detail::gelu;
    using transformer_detail::layer_norm;
    const auto& data_split = data(batch.split);
    const std::size_t B = batch.indices.size(), S = cfg_.seq_len, D = cfg_.d_model;
    const std::size_t H = cfg_.n_heads, dh = D / H, F = D * cfg_.mlp_mult;
    const std::size_t V = cfg_.vocab, rows = B * S;

    std::vector<double> x(rows * D);
    {
      const auto emb = src.fetch(kTokEmb);
      for (std::size_t b = 0; b < B; ++b) {
        const std::uint32_t* seq = &data_split.tokens[batch.indices[b] * data_split.length];
        for (std::size_t t = 0; t < S; ++t) {
          for (std::size_t j = 0; j < D; ++j) {
            x[(b * S + t) * D + j] = static_cast<double>(emb[seq[t] * D + j]);
          }
        }
      }
      const auto pos = src.fetch(kPosEmb);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < D; ++j) {
          x[r * D + j] += static_cast<double>(pos[(r % S) * D + j]);
        }
      }
    }

    // Attention.
    {
      const auto a = layer_norm(x, rows, D, src, kLn1Gain);
      const auto q = mlp_detail::affine(a, rows, D, D, src.fetch(kWq));
      const auto k = mlp_detail::affine(a, rows, D, D, src.fetch(kWk));
      const auto v = mlp_detail::affine(a, rows, D, D, src.fetch(kWv));
      std::vector<double> o(rows * D, 0.0);
      const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
      std::vector<double> p(S);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < H; ++h) {
          for (std::size_t i = 0; i < S; ++i) {
            const double* qi = &q[(b * S + i) * D + h * dh];
            double mx = -INFINITY;
            for (std::size_t j = 0; j <= i; ++j) {
              const double* kj = &k[(b * S + j) * D + h * dh];
              double dot = 0.0;
              for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
              p[j] = dot * scale;
              mx = std::max(mx, p[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
              p[j] = std::exp(p[j] - mx);
              z += p[j];
            }
            double* oi = &o[(b * S + i) * D + h * dh];
            for (std::size_t j = 0; j <= i; ++j) {
              const double w = p[j] / z;
              const double* vj = &v[(b * S + j) * D + h * dh];
              for (std::size_t c = 0; c < dh; ++c) oi[c] += w * vj[c];
            }
          }
        }
      }
      const auto out = mlp_detail::affine(o, rows, D, D, src.fetch(kWo));
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += out[i];
    }

    // MLP.
    {
      const auto m = layer_norm(x, rows, D, src, kLn2Gain);
      auto u = mlp_detail::affine(m, rows, D, F, src.fetch(kFc1W));
      const auto b1 = src.fetch(kFc1B);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < F; ++j) {
          u[r * F + j] = gelu(u[r * F + j] + static_cast<double>(b1[j]));
        }
      }
      const auto y = mlp_detail::affine(u, rows, F, D, src.fetch(kFc2W));
      const auto b2 = src.fetch(kFc2B);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < D; ++j) {
          x[r * D + j] += y[r * D + j] + static_cast<double>(b2[j]);
        }
      }
    }

    const auto f = layer_norm(x, rows, D, src, kLnfGain);
    return mlp_detail::affine(f, rows, D, V, src.fetch(kUnembed));
  }

 private:
  void add_random(const std::string& name, std::vector<std::size_t> shape, double scale) {
    NoiseStream s(hash_pair(hash_pair(cfg_.seed, kInitDomain), initial_.num_layers()));
    std::vector<T> values(element_count(shape));
    for (auto& v : values) v = static_cast<T>(scale * s.next_gaussian());
    initial_.add_layer(name, std::move(shape), std::move(values));
  }
  void add_const(const std::string& name, std::vector<std::size_t> shape, double value) {
    std::vector<T> values(element_count(shape), static_cast<T>(value));
    initial_.add_layer(name, std::move(shape), std::move(values));
  }

  TransformerConfig cfg_;
  TokenData train_;
  TokenData eval_;
  ParameterSet<T> initial_;
};

template <Real T>
TinyTransformerTask<T> tiny_transformer_task(std::size_t d_model, std::size_t n_heads,
                                             std::size_t seq_len, std::size_t vocab,
                                             std::uint64_t seed = 0) {
  TransformerConfig cfg;
  cfg.d_model = d_model;
  cfg.n_heads = n_heads;
  cfg.seq_len = seq_len;
  cfg.vocab = vocab;
  cfg.seed = seed;
  return TinyTransformerTask<T>(cfg);
}

}  // namespace szo
