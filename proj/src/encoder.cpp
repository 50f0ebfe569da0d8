#include "promptsteer/encoder.hpp"

#include "promptsteer/errors.hpp"
#include "promptsteer/simd.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace promptsteer {

void EncoderConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("invalid encoder config: " + what); };
    if (d_model <= 0) fail("d_model must be positive");
    if (n_layers < 0) fail("n_layers must be non-negative");
    if (n_heads <= 0) fail("n_heads must be positive");
    if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (d_ff <= 0) fail("d_ff must be positive");
    if (max_len < 3) fail("max_len must allow bos, one token and eos");
    // bos and eos rows; the larger minimum is a vocabulary-file rule.
    if (vocab_size < 2) fail("vocab_size must cover at least bos and eos");
    if (d_out <= 0) fail("d_out must be positive");
    if (!has_projection && d_out != d_model) fail("d_out must equal d_model without a projection");
}

namespace {

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

struct NormCache {
    Matrix xhat;
    std::vector<double> rstd;
};

void norm_row(std::span<const double> x, const LayerNorm& p, std::span<double> y,
              std::span<double> xhat, double& rstd) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < x.size(); ++j) {
        xhat[j] = (x[j] - mean) * rstd;
        y[j] = xhat[j] * p.gain[j] + p.bias[j];
    }
}

Matrix norm_forward(const Matrix& x, const LayerNorm& p, NormCache& cache) {
    Matrix y(x.rows(), x.cols());
    cache.xhat = Matrix(x.rows(), x.cols());
    cache.rstd.assign(x.rows(), 0.0);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        norm_row(x.row(t), p, y.row(t), cache.xhat.row(t), cache.rstd[t]);
    }
    return y;
}

void norm_backward_row(std::span<const double> dy, std::span<const double> xhat, double rstd,
                       const LayerNorm& p, std::span<double> dx) {
    const std::size_t d = dy.size();
    std::vector<double> dxhat(d);
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        dxhat[j] = dy[j] * p.gain[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_xhat += dxhat[j] * xhat[j];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
        dx[j] += rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
    }
}

// Accumulates into dx.
void norm_backward(const Matrix& dy, const NormCache& cache, const LayerNorm& p, Matrix& dx) {
    for (std::size_t t = 0; t < dy.rows(); ++t) {
        norm_backward_row(dy.row(t), cache.xhat.row(t), cache.rstd[t], p, dx.row(t));
    }
}

Matrix linear_forward(const Matrix& x, const Linear& lin) {
    const Matrix& w = lin.weight;
    Matrix y(x.rows(), w.cols());
    for (std::size_t t = 0; t < x.rows(); ++t) {
        auto out = y.row(t);
        std::copy(lin.bias.begin(), lin.bias.end(), out.begin());
        for (std::size_t i = 0; i < w.rows(); ++i) simd::axpy(x(t, i), w.row(i), out);
    }
    return y;
}

// Accumulates dy W^T into dx.
void linear_backward(const Matrix& dy, const Linear& lin, Matrix& dx) {
    const Matrix& w = lin.weight;
    for (std::size_t t = 0; t < dy.rows(); ++t) {
        for (std::size_t i = 0; i < w.rows(); ++i) dx(t, i) += simd::dot(dy.row(t), w.row(i));
    }
}

constexpr double kGeluAlpha = 1.702;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// x * sigmoid(1.702 x)
double quick_gelu(double x) { return x * sigmoid(kGeluAlpha * x); }

double quick_gelu_grad(double x) {
    const double s = sigmoid(kGeluAlpha * x);
    return s + kGeluAlpha * x * s * (1.0 - s);
}

// Softmax over a span, max-subtracted, summed in index order.
void softmax_into(std::span<const double> v, std::span<double> p) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double sum = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        p[j] = std::exp(v[j] - mx);
        sum += p[j];
    }
    for (double& x : p) x /= sum;
}

// ---------------------------------------------------------------------------
// Forward / reverse passes over an (S x d_model) block of input embeddings
// ---------------------------------------------------------------------------

struct LayerCache {
    NormCache norm1;
    Matrix q, k, v;
    std::vector<Matrix> probs;  // per head, S x S, lower triangular
    NormCache norm2;
    Matrix pre_act;
    Matrix act;
    Matrix c;  // ln2 output
    Matrix a;  // ln1 output
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    std::vector<double> final_xhat;
    double final_rstd = 0.0;
    std::vector<double> pooled_hidden;  // before projection
};

Matrix causal_attention(const Matrix& q, const Matrix& k, const Matrix& v, int n_heads,
                        std::vector<Matrix>& probs) {
    const std::size_t s = q.rows();
    const std::size_t hd = q.cols() / static_cast<std::size_t>(n_heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Matrix mixed(s, q.cols());
    probs.assign(static_cast<std::size_t>(n_heads), Matrix(s, s));
    std::vector<double> scores(s);
    for (std::size_t h = 0; h < probs.size(); ++h) {
        const std::size_t off = h * hd;
        Matrix& p = probs[h];
        for (std::size_t t = 0; t < s; ++t) {
            const auto qt = q.row(t).subspan(off, hd);
            for (std::size_t u = 0; u <= t; ++u) {
                scores[u] = simd::dot(qt, k.row(u).subspan(off, hd)) * scale;
            }
            softmax_into(std::span<const double>(scores).first(t + 1), p.row(t).first(t + 1));
            auto out = mixed.row(t).subspan(off, hd);
            for (std::size_t u = 0; u <= t; ++u) simd::axpy(p(t, u), v.row(u).subspan(off, hd), out);
        }
    }
    return mixed;
}

EmbeddingVector forward(const EncoderWeights& w, const Matrix& inputs, ForwardCache& cache) {
    const auto& cfg = w.config;
    const std::size_t s = inputs.rows();
    Matrix x = inputs;
    for (std::size_t t = 0; t < s; ++t) simd::axpy(1.0, w.position_embedding.row(t), x.row(t));

    cache.layers.assign(w.layers.size(), {});
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const EncoderLayer& layer = w.layers[l];
        LayerCache& lc = cache.layers[l];

        lc.a = norm_forward(x, layer.ln1, lc.norm1);
        lc.q = linear_forward(lc.a, layer.query);
        lc.k = linear_forward(lc.a, layer.key);
        lc.v = linear_forward(lc.a, layer.value);
        const Matrix mixed = causal_attention(lc.q, lc.k, lc.v, cfg.n_heads, lc.probs);
        const Matrix attn = linear_forward(mixed, layer.out);
        simd::axpy(1.0, attn.flat(), x.flat());

        lc.c = norm_forward(x, layer.ln2, lc.norm2);
        lc.pre_act = linear_forward(lc.c, layer.fc1);
        lc.act = Matrix(lc.pre_act.rows(), lc.pre_act.cols());
        for (std::size_t i = 0; i < lc.act.flat().size(); ++i) {
            lc.act.flat()[i] = quick_gelu(lc.pre_act.flat()[i]);
        }
        const Matrix mlp = linear_forward(lc.act, layer.fc2);
        simd::axpy(1.0, mlp.flat(), x.flat());
    }

    const std::size_t d = static_cast<std::size_t>(cfg.d_model);
    cache.pooled_hidden.assign(d, 0.0);
    cache.final_xhat.assign(d, 0.0);
    norm_row(x.row(s - 1), w.final_norm, cache.pooled_hidden, cache.final_xhat, cache.final_rstd);

    if (!cfg.has_projection) return cache.pooled_hidden;
    EmbeddingVector out(static_cast<std::size_t>(cfg.d_out), 0.0);
    for (std::size_t j = 0; j < d; ++j) simd::axpy(cache.pooled_hidden[j], w.projection.row(j), out);
    return out;
}

void attention_backward(const Matrix& dmixed, const LayerCache& lc, int n_heads, Matrix& dq,
                        Matrix& dk, Matrix& dv) {
    const std::size_t s = dmixed.rows();
    const std::size_t hd = dmixed.cols() / static_cast<std::size_t>(n_heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<double> dp(s);
    for (std::size_t h = 0; h < lc.probs.size(); ++h) {
        const std::size_t off = h * hd;
        const Matrix& p = lc.probs[h];
        for (std::size_t t = 0; t < s; ++t) {
            const auto dout = dmixed.row(t).subspan(off, hd);
            double weighted = 0.0;
            for (std::size_t u = 0; u <= t; ++u) {
                dp[u] = simd::dot(dout, lc.v.row(u).subspan(off, hd));
                simd::axpy(p(t, u), dout, dv.row(u).subspan(off, hd));
                weighted += p(t, u) * dp[u];
            }
            for (std::size_t u = 0; u <= t; ++u) {
                const double ds = p(t, u) * (dp[u] - weighted) * scale;
                simd::axpy(ds, lc.k.row(u).subspan(off, hd), dq.row(t).subspan(off, hd));
                simd::axpy(ds, lc.q.row(t).subspan(off, hd), dk.row(u).subspan(off, hd));
            }
        }
    }
}

// Gradient of the pooled output (dot with d_out) back to the input rows.
Matrix backward(const EncoderWeights& w, const ForwardCache& cache, std::size_t s,
                const EmbeddingVector& d_out) {
    const auto& cfg = w.config;
    const std::size_t d = static_cast<std::size_t>(cfg.d_model);

    std::vector<double> d_pooled(d, 0.0);
    if (cfg.has_projection) {
        for (std::size_t j = 0; j < d; ++j) d_pooled[j] = simd::dot(d_out, w.projection.row(j));
    } else {
        d_pooled = d_out;
    }
    Matrix dx(s, d);
    norm_backward_row(d_pooled, cache.final_xhat, cache.final_rstd, w.final_norm, dx.row(s - 1));

    for (std::size_t l = w.layers.size(); l-- > 0;) {
        const EncoderLayer& layer = w.layers[l];
        const LayerCache& lc = cache.layers[l];

        // x_out = x_mid + fc2(gelu(fc1(ln2(x_mid))))
        Matrix dact(s, static_cast<std::size_t>(cfg.d_ff));
        linear_backward(dx, layer.fc2, dact);
        for (std::size_t i = 0; i < dact.flat().size(); ++i) {
            dact.flat()[i] *= quick_gelu_grad(lc.pre_act.flat()[i]);
        }
        Matrix dc(s, d);
        linear_backward(dact, layer.fc1, dc);
        norm_backward(dc, lc.norm2, layer.ln2, dx);

        // x_mid = x_in + out(attention(ln1(x_in)))
        Matrix dmixed(s, d);
        linear_backward(dx, layer.out, dmixed);
        Matrix dq(s, d), dk(s, d), dv(s, d);
        attention_backward(dmixed, lc, cfg.n_heads, dq, dk, dv);
        Matrix da(s, d);
        linear_backward(dq, layer.query, da);
        linear_backward(dk, layer.key, da);
        linear_backward(dv, layer.value, da);
        norm_backward(da, lc.norm1, layer.ln1, dx);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Input assembly
// ---------------------------------------------------------------------------

void check_length(const EncoderConfig& cfg, std::size_t content) {
    if (content + 2 > static_cast<std::size_t>(cfg.max_len)) {
        throw LengthError("sequence of " + std::to_string(content) +
                          " tokens plus bos/eos exceeds max_len " + std::to_string(cfg.max_len));
    }
}

void copy_token_row(const EncoderWeights& w, TokenId id, std::span<double> dst) {
    if (id >= w.token_embedding.rows()) {
        throw RangeError("token id " + std::to_string(id) + " outside the embedding table");
    }
    const auto src = w.token_embedding.row(id);
    std::copy(src.begin(), src.end(), dst.begin());
}

constexpr TokenId kBos = 0;
constexpr TokenId kEos = 1;

Matrix assemble_inputs(const EncoderWeights& w, const Matrix& soft_rows, const TokenSequence& suffix) {
    const std::size_t k = soft_rows.rows();
    const std::size_t s = k + suffix.size() + 2;
    Matrix inputs(s, static_cast<std::size_t>(w.config.d_model));
    copy_token_row(w, kBos, inputs.row(0));
    for (std::size_t i = 0; i < k; ++i) {
        std::copy(soft_rows.row(i).begin(), soft_rows.row(i).end(), inputs.row(1 + i).begin());
    }
    for (std::size_t i = 0; i < suffix.size(); ++i) copy_token_row(w, suffix.ids[i], inputs.row(1 + k + i));
    copy_token_row(w, kEos, inputs.row(s - 1));
    return inputs;
}

void check_logits(const PrefixLogits& logits, const EncoderWeights& w) {
    if (logits.k() > 0 && logits.vocab_size() != w.token_embedding.rows()) {
        throw CompatibilityError("prefix logits have " + std::to_string(logits.vocab_size()) +
                                 " columns but the vocabulary has " +
                                 std::to_string(w.token_embedding.rows()));
    }
    for (double v : logits.values.flat()) {
        if (!std::isfinite(v)) throw MathError("non-finite prefix logit");
    }
}

Matrix soft_embed_with_probs(const PrefixLogits& logits, const EncoderWeights& w, Matrix* probs_out) {
    const Matrix& e = w.token_embedding;
    Matrix rows(logits.k(), e.cols());
    Matrix probs(logits.k(), logits.vocab_size());
    for (std::size_t i = 0; i < logits.k(); ++i) {
        softmax_into(logits.values.row(i), probs.row(i));
        auto out = rows.row(i);
        for (std::size_t j = 0; j < e.rows(); ++j) simd::axpy(probs(i, j), e.row(j), out);
    }
    if (probs_out != nullptr) *probs_out = std::move(probs);
    return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

EncoderWeights init_random_encoder(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](Matrix& m, std::size_t rows, std::size_t cols, double stddev) {
        m = Matrix(rows, cols);
        for (double& v : m.flat()) v = static_cast<double>(static_cast<float>(normal(rng) * stddev));
    };
    auto norm = [](std::size_t d) {
        return LayerNorm{std::vector<double>(d, 1.0), std::vector<double>(d, 0.0)};
    };
    auto linear = [&](std::size_t in, std::size_t out) {
        Linear lin;
        fill(lin.weight, in, out, 0.02);
        lin.bias.assign(out, 0.0);
        return lin;
    };

    const auto d = static_cast<std::size_t>(config.d_model);
    const auto ff = static_cast<std::size_t>(config.d_ff);
    EncoderWeights w;
    w.config = config;
    fill(w.token_embedding, static_cast<std::size_t>(config.vocab_size), d, 0.02);
    fill(w.position_embedding, static_cast<std::size_t>(config.max_len), d, 0.02);
    for (int l = 0; l < config.n_layers; ++l) {
        EncoderLayer layer;
        layer.ln1 = norm(d);
        layer.query = linear(d, d);
        layer.key = linear(d, d);
        layer.value = linear(d, d);
        layer.out = linear(d, d);
        layer.ln2 = norm(d);
        layer.fc1 = linear(d, ff);
        layer.fc2 = linear(ff, d);
        w.layers.push_back(std::move(layer));
    }
    w.final_norm = norm(d);
    if (config.has_projection) {
        fill(w.projection, d, static_cast<std::size_t>(config.d_out), 1.0 / std::sqrt(static_cast<double>(d)));
    }
    return w;
}

void validate_weights(const EncoderWeights& w) {
    const auto& cfg = w.config;
    cfg.validate();
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto ff = static_cast<std::size_t>(cfg.d_ff);
    auto shape = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
        if (m.rows() != r || m.cols() != c) {
            throw FormatError(std::string("tensor ") + name + " has shape " + std::to_string(m.rows()) +
                              "x" + std::to_string(m.cols()) + ", expected " + std::to_string(r) +
                              "x" + std::to_string(c));
        }
        for (double v : m.flat()) {
            if (!std::isfinite(v)) throw FormatError(std::string("tensor ") + name + " is not finite");
        }
    };
    auto vec = [](const std::vector<double>& v, std::size_t n, const char* name) {
        if (v.size() != n) throw FormatError(std::string("tensor ") + name + " has the wrong length");
        for (double x : v) {
            if (!std::isfinite(x)) throw FormatError(std::string("tensor ") + name + " is not finite");
        }
    };
    auto lin = [&](const Linear& l, std::size_t in, std::size_t out, const char* name) {
        shape(l.weight, in, out, name);
        vec(l.bias, out, name);
    };
    auto ln = [&](const LayerNorm& n, const char* name) {
        vec(n.gain, d, name);
        vec(n.bias, d, name);
    };
    shape(w.token_embedding, static_cast<std::size_t>(cfg.vocab_size), d, "token_embedding");
    shape(w.position_embedding, static_cast<std::size_t>(cfg.max_len), d, "position_embedding");
    if (w.layers.size() != static_cast<std::size_t>(cfg.n_layers)) {
        throw FormatError("layer count does not match config");
    }
    for (const auto& layer : w.layers) {
        ln(layer.ln1, "ln1");
        lin(layer.query, d, d, "query");
        lin(layer.key, d, d, "key");
        lin(layer.value, d, d, "value");
        lin(layer.out, d, d, "out");
        ln(layer.ln2, "ln2");
        lin(layer.fc1, d, ff, "fc1");
        lin(layer.fc2, ff, d, "fc2");
    }
    ln(w.final_norm, "final_norm");
    if (cfg.has_projection) {
        shape(w.projection, d, static_cast<std::size_t>(cfg.d_out), "projection");
    } else if (!w.projection.empty()) {
        throw FormatError("projection present but config has_projection is false");
    }
}

EmbeddingVector encode(const EncoderWeights& w, const TokenSequence& seq) {
    check_length(w.config, seq.size());
    const Matrix inputs = assemble_inputs(w, Matrix(0, static_cast<std::size_t>(w.config.d_model)), seq);
    ForwardCache cache;
    return forward(w, inputs, cache);
}

Matrix soft_embed(const PrefixLogits& logits, const EncoderWeights& w) {
    check_logits(logits, w);
    return soft_embed_with_probs(logits, w, nullptr);
}

EmbeddingVector encode_soft(const EncoderWeights& w, const PrefixLogits& logits,
                            const TokenSequence& suffix) {
    check_length(w.config, logits.k() + suffix.size());
    check_logits(logits, w);
    const Matrix soft = soft_embed_with_probs(logits, w, nullptr);
    ForwardCache cache;
    return forward(w, assemble_inputs(w, soft, suffix), cache);
}

LossGradient grad_loss_wrt_logits(const EncoderWeights& w, const PrefixLogits& logits,
                                  const TokenSequence& suffix, const EmbeddingVector& target) {
    check_length(w.config, logits.k() + suffix.size());
    check_logits(logits, w);
    if (target.size() != static_cast<std::size_t>(w.config.d_out)) {
        throw CompatibilityError("target width does not match encoder d_out");
    }
    const double target_norm = l2_norm(target);
    if (!(target_norm > 0.0)) throw MathError("target embedding has zero norm");

    Matrix probs;
    const Matrix soft = soft_embed_with_probs(logits, w, &probs);
    const std::size_t s = logits.k() + suffix.size() + 2;
    ForwardCache cache;
    const EmbeddingVector out = forward(w, assemble_inputs(w, soft, suffix), cache);

    const double out_norm = l2_norm(out);
    if (!(out_norm > 0.0)) throw MathError("encoder output has zero norm");
    const double cos = simd::dot(out, target) / (out_norm * target_norm);

    // d(-cos)/d out = -(t / (|o||t|) - cos * o / |o|^2)
    EmbeddingVector d_out(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        d_out[i] = -(target[i] / (out_norm * target_norm) - cos * out[i] / (out_norm * out_norm));
    }

    LossGradient result;
    result.loss = -cos;
    result.grad = Matrix(logits.k(), logits.vocab_size());
    if (logits.k() == 0) return result;

    const Matrix d_inputs = backward(w, cache, s, d_out);
    const Matrix& e = w.token_embedding;
    std::vector<double> dp(e.rows());
    for (std::size_t i = 0; i < logits.k(); ++i) {
        const auto d_row = d_inputs.row(1 + i);
        double weighted = 0.0;
        for (std::size_t j = 0; j < e.rows(); ++j) {
            dp[j] = simd::dot(d_row, e.row(j));
            weighted += probs(i, j) * dp[j];
        }
        for (std::size_t j = 0; j < e.rows(); ++j) result.grad(i, j) = probs(i, j) * (dp[j] - weighted);
    }
    return result;
}

}  // namespace promptsteer
