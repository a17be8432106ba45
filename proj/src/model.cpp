#include "tinyembed/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "tinyembed/checkpoint.hpp"
#include "tinyembed/lora.hpp"

namespace tinyembed {

namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kRopeBase = 10000.0;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y = x * inv * g, inv = 1/rms(x); returns inv.
double rmsnorm_row(const double* x, const double* g, int d, double* y) {
    double ms = 0.0;
    for (int i = 0; i < d; ++i) {
        ms += x[i] * x[i];
    }
    const double inv = 1.0 / std::sqrt(ms / d + kRmsEps);
    for (int i = 0; i < d; ++i) {
        y[i] = x[i] * inv * g[i];
    }
    return inv;
}

void rmsnorm_backward_row(const double* dy, const double* x, const double* g, double inv, int d,
                          double* dx_acc, double* dg_acc) {
    double wx = 0.0;
    for (int i = 0; i < d; ++i) {
        dg_acc[i] += dy[i] * x[i] * inv;
        wx += dy[i] * g[i] * x[i];
    }
    const double coeff = wx * inv * inv * inv / d;
    for (int i = 0; i < d; ++i) {
        dx_acc[i] += dy[i] * g[i] * inv - coeff * x[i];
    }
}

// In-place rotary rotation of one head slice at a given position.
// sign = +1 forward, -1 for the transposed rotation in the backward pass.
void rope_rotate(double* x, int head_dim, int pos, double sign) {
    for (int j = 0; j + 1 < head_dim; j += 2) {
        const double theta = pos * std::pow(kRopeBase, -static_cast<double>(j) / head_dim);
        const double c = std::cos(theta);
        const double s = sign * std::sin(theta);
        const double x0 = x[j];
        const double x1 = x[j + 1];
        x[j] = x0 * c - x1 * s;
        x[j + 1] = x0 * s + x1 * c;
    }
}

struct SiteRun {
    const SiteAdapter* adapter = nullptr;
    double scale = 0.0;
};

SiteRun site_run(const LoraRuntime* lora, int layer, Site site) {
    if (lora == nullptr || lora->adapters == nullptr) {
        return {};
    }
    const auto& slot = lora->adapters->layers[static_cast<size_t>(layer)][static_cast<int>(site)];
    if (!slot.has_value()) {
        return {};
    }
    return {&*slot, lora->adapters->spec.scale()};
}

// Y = W X^T rows + adapter delta; samples and records the dropout mask when
// the adapter path is in train mode.
void project(const Matrix& w, const Matrix& x, Matrix& y, const SiteRun& run,
             const LoraRuntime* lora, Matrix* mask_out) {
    const int seq = x.rows;
    for (int t = 0; t < seq; ++t) {
        matvec(w, x.row(t), y.row(t));
    }
    if (run.adapter == nullptr) {
        return;
    }
    const Matrix& a = run.adapter->a;
    const Matrix& b = run.adapter->b;
    const double p = lora->adapters->spec.dropout_p;
    const bool use_dropout = lora->train_mode && p > 0.0;
    if (use_dropout) {
        if (lora->dropout_rng == nullptr) {
            throw std::invalid_argument("lora: train-mode dropout requires an rng");
        }
        *mask_out = Matrix(seq, x.cols);
    }

    std::vector<double> xa(static_cast<size_t>(x.cols));
    std::vector<double> ax(static_cast<size_t>(a.rows));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double keep_scale = use_dropout ? 1.0 / (1.0 - p) : 1.0;
    for (int t = 0; t < seq; ++t) {
        const double* xt = x.row(t);
        if (use_dropout) {
            double* mrow = mask_out->row(t);
            for (int i = 0; i < x.cols; ++i) {
                mrow[i] = unit(*lora->dropout_rng) < p ? 0.0 : keep_scale;
                xa[static_cast<size_t>(i)] = mrow[i] * xt[i];
            }
        } else {
            std::memcpy(xa.data(), xt, sizeof(double) * static_cast<size_t>(x.cols));
        }
        matvec(a, xa.data(), ax.data());
        double* yt = y.row(t);
        for (int o = 0; o < b.rows; ++o) {
            yt[o] += run.scale * dot(std::span<const double>(b.row(o), static_cast<size_t>(b.cols)),
                                     std::span<const double>(ax.data(), ax.size()));
        }
    }
}

// Accumulates dW, dX and, when an adapter is attached, dA/dB through the
// same dropout mask the forward pass used.
void project_backward(const Matrix& w, const Matrix& x, const Matrix& dy, Matrix& dw, Matrix& dx,
                      const SiteRun& run, const Matrix& mask, SiteAdapter* dadapter) {
    const int seq = x.rows;
    for (int t = 0; t < seq; ++t) {
        outer_acc(dw, dy.row(t), x.row(t));
        matvec_transposed_acc(w, dy.row(t), dx.row(t));
    }
    if (run.adapter == nullptr) {
        return;
    }
    const Matrix& a = run.adapter->a;
    const Matrix& b = run.adapter->b;
    const bool masked = mask.rows == seq && mask.cols == x.cols;

    std::vector<double> xa(static_cast<size_t>(x.cols));
    std::vector<double> ax(static_cast<size_t>(a.rows));
    std::vector<double> btd(static_cast<size_t>(a.rows));
    std::vector<double> dxa(static_cast<size_t>(x.cols));
    for (int t = 0; t < seq; ++t) {
        const double* xt = x.row(t);
        if (masked) {
            const double* mrow = mask.row(t);
            for (int i = 0; i < x.cols; ++i) {
                xa[static_cast<size_t>(i)] = mrow[i] * xt[i];
            }
        } else {
            std::memcpy(xa.data(), xt, sizeof(double) * static_cast<size_t>(x.cols));
        }
        const double* dyt = dy.row(t);
        // btd = B^T dy, scaled
        for (int r = 0; r < a.rows; ++r) {
            double acc = 0.0;
            for (int o = 0; o < b.rows; ++o) {
                acc += b.at(o, r) * dyt[o];
            }
            btd[static_cast<size_t>(r)] = run.scale * acc;
        }
        // dA += btd (outer) xa ; dB += dy (outer) (A xa) * scale
        outer_acc(dadapter->a, btd.data(), xa.data());
        matvec(a, xa.data(), ax.data());
        for (double& v : ax) {
            v *= run.scale;
        }
        outer_acc(dadapter->b, dyt, ax.data());
        // dx += mask .* (A^T btd)
        std::fill(dxa.begin(), dxa.end(), 0.0);
        matvec_transposed_acc(a, btd.data(), dxa.data());
        double* dxt = dx.row(t);
        if (masked) {
            const double* mrow = mask.row(t);
            for (int i = 0; i < x.cols; ++i) {
                dxt[i] += mrow[i] * dxa[static_cast<size_t>(i)];
            }
        } else {
            for (int i = 0; i < x.cols; ++i) {
                dxt[i] += dxa[static_cast<size_t>(i)];
            }
        }
    }
}

}  // namespace

const char* site_name(Site site) {
    switch (site) {
        case Site::q: return "q";
        case Site::k: return "k";
        case Site::v: return "v";
        case Site::o: return "o";
        case Site::gate: return "gate";
        case Site::up: return "up";
        case Site::down: return "down";
    }
    throw std::invalid_argument("site_name: bad site");
}

Site site_from_name(const std::string& name) {
    for (Site s : kAllSites) {
        if (name == site_name(s)) {
            return s;
        }
    }
    throw std::invalid_argument("unknown projection site: " + name);
}

void ModelConfig::validate() const {
    if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 1) {
        throw std::invalid_argument("model config: all counts must be >= 1");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("model config: d_model must be divisible by n_heads");
    }
}

Matrix& LayerParams::site(Site s) {
    switch (s) {
        case Site::q: return q;
        case Site::k: return k;
        case Site::v: return v;
        case Site::o: return o;
        case Site::gate: return gate;
        case Site::up: return up;
        case Site::down: return down;
    }
    throw std::invalid_argument("LayerParams::site: bad site");
}

const Matrix& LayerParams::site(Site s) const {
    return const_cast<LayerParams*>(this)->site(s);
}

int64_t parameter_count(const ModelConfig& config) {
    const int64_t d = config.d_model;
    const int64_t ff = config.d_ff;
    const int64_t per_layer = 4 * d * d + 2 * ff * d + d * ff + 2 * d;
    return static_cast<int64_t>(config.vocab_size) * d + config.n_layers * per_layer + d;
}

Parameters init_parameters(const ModelConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);

    auto fill_normal = [&](Matrix& m, double std) {
        for (double& v : m.data) {
            v = unit_normal(rng) * std;
        }
    };

    Parameters params;
    params.embedding = Matrix(config.vocab_size, config.d_model);
    fill_normal(params.embedding, 1.0);
    params.layers.resize(static_cast<size_t>(config.n_layers));
    for (LayerParams& layer : params.layers) {
        layer.q = Matrix(config.d_model, config.d_model);
        layer.k = Matrix(config.d_model, config.d_model);
        layer.v = Matrix(config.d_model, config.d_model);
        layer.o = Matrix(config.d_model, config.d_model);
        layer.gate = Matrix(config.d_ff, config.d_model);
        layer.up = Matrix(config.d_ff, config.d_model);
        layer.down = Matrix(config.d_model, config.d_ff);
        for (Site s : kAllSites) {
            Matrix& w = layer.site(s);
            fill_normal(w, 1.0 / std::sqrt(static_cast<double>(w.cols)));
        }
        layer.norm1.assign(static_cast<size_t>(config.d_model), 1.0);
        layer.norm2.assign(static_cast<size_t>(config.d_model), 1.0);
    }
    params.final_norm.assign(static_cast<size_t>(config.d_model), 1.0);
    return params;
}

Parameters zero_like(const ModelConfig& config) {
    Parameters params;
    params.embedding = Matrix(config.vocab_size, config.d_model);
    params.layers.resize(static_cast<size_t>(config.n_layers));
    for (LayerParams& layer : params.layers) {
        layer.q = Matrix(config.d_model, config.d_model);
        layer.k = Matrix(config.d_model, config.d_model);
        layer.v = Matrix(config.d_model, config.d_model);
        layer.o = Matrix(config.d_model, config.d_model);
        layer.gate = Matrix(config.d_ff, config.d_model);
        layer.up = Matrix(config.d_ff, config.d_model);
        layer.down = Matrix(config.d_model, config.d_ff);
        layer.norm1.assign(static_cast<size_t>(config.d_model), 0.0);
        layer.norm2.assign(static_cast<size_t>(config.d_model), 0.0);
    }
    params.final_norm.assign(static_cast<size_t>(config.d_model), 0.0);
    return params;
}

void accumulate(Parameters& into, const Parameters& grads) {
    auto add = [](auto& a, const auto& b) {
        for (size_t i = 0; i < b.size(); ++i) {
            a[i] += b[i];
        }
    };
    add(into.embedding.data, grads.embedding.data);
    for (size_t l = 0; l < into.layers.size(); ++l) {
        for (Site s : kAllSites) {
            add(into.layers[l].site(s).data, grads.layers[l].site(s).data);
        }
        add(into.layers[l].norm1, grads.layers[l].norm1);
        add(into.layers[l].norm2, grads.layers[l].norm2);
    }
    add(into.final_norm, grads.final_norm);
}

ForwardResult forward(const ModelConfig& config, const Parameters& params,
                      std::span<const int> ids, const ForwardOptions& options) {
    const int seq = static_cast<int>(ids.size());
    if (seq == 0) {
        throw std::invalid_argument("forward: empty input");
    }
    if (seq > config.max_seq_len) {
        throw std::invalid_argument("forward: sequence length " + std::to_string(seq) +
                                    " exceeds max_seq_len " + std::to_string(config.max_seq_len));
    }
    for (int id : ids) {
        if (id < 0 || id >= config.vocab_size) {
            throw std::invalid_argument("forward: token id out of range");
        }
    }

    const int d = config.d_model;
    const int hd = config.head_dim();
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.ids.assign(ids.begin(), ids.end());
    cache.layers.resize(static_cast<size_t>(config.n_layers));
    if (options.want_attention) {
        result.attention.weights.resize(static_cast<size_t>(config.n_layers));
    }

    Matrix x(seq, d);
    for (int t = 0; t < seq; ++t) {
        std::memcpy(x.row(t), params.embedding.row(ids[static_cast<size_t>(t)]), sizeof(double) * d);
    }

    for (int l = 0; l < config.n_layers; ++l) {
        const LayerParams& layer = params.layers[static_cast<size_t>(l)];
        LayerCache& lc = cache.layers[static_cast<size_t>(l)];
        lc.x_in = x;

        lc.n1 = Matrix(seq, d);
        lc.inv1.resize(static_cast<size_t>(seq));
        for (int t = 0; t < seq; ++t) {
            lc.inv1[static_cast<size_t>(t)] = rmsnorm_row(x.row(t), layer.norm1.data(), d, lc.n1.row(t));
        }

        lc.q_rot = Matrix(seq, d);
        lc.k_rot = Matrix(seq, d);
        lc.v = Matrix(seq, d);
        project(layer.q, lc.n1, lc.q_rot, site_run(options.lora, l, Site::q), options.lora,
                &lc.adapter_mask[static_cast<int>(Site::q)]);
        project(layer.k, lc.n1, lc.k_rot, {}, options.lora, nullptr);
        project(layer.v, lc.n1, lc.v, site_run(options.lora, l, Site::v), options.lora,
                &lc.adapter_mask[static_cast<int>(Site::v)]);
        for (int t = 0; t < seq; ++t) {
            for (int h = 0; h < config.n_heads; ++h) {
                rope_rotate(lc.q_rot.row(t) + h * hd, hd, t, 1.0);
                rope_rotate(lc.k_rot.row(t) + h * hd, hd, t, 1.0);
            }
        }

        lc.probs.assign(static_cast<size_t>(config.n_heads), Matrix());
        lc.ctx = Matrix(seq, d);
        for (int h = 0; h < config.n_heads; ++h) {
            Matrix& probs = lc.probs[static_cast<size_t>(h)];
            probs = Matrix(seq, seq);
            const int off = h * hd;
            for (int i = 0; i < seq; ++i) {
                double* prow = probs.row(i);
                double max_score = -1e300;
                for (int j = 0; j <= i; ++j) {
                    double s = 0.0;
                    const double* qi = lc.q_rot.row(i) + off;
                    const double* kj = lc.k_rot.row(j) + off;
                    for (int e = 0; e < hd; ++e) {
                        s += qi[e] * kj[e];
                    }
                    prow[j] = s * inv_sqrt_hd;
                    max_score = std::max(max_score, prow[j]);
                }
                double z = 0.0;
                for (int j = 0; j <= i; ++j) {
                    prow[j] = std::exp(prow[j] - max_score);
                    z += prow[j];
                }
                double* ctx_i = lc.ctx.row(i) + off;
                for (int j = 0; j <= i; ++j) {
                    prow[j] /= z;
                    const double* vj = lc.v.row(j) + off;
                    for (int e = 0; e < hd; ++e) {
                        ctx_i[e] += prow[j] * vj[e];
                    }
                }
            }
            if (options.want_attention) {
                result.attention.weights[static_cast<size_t>(l)].push_back(probs);
            }
        }

        Matrix att_out(seq, d);
        project(layer.o, lc.ctx, att_out, site_run(options.lora, l, Site::o), options.lora,
                &lc.adapter_mask[static_cast<int>(Site::o)]);

        lc.x_mid = Matrix(seq, d);
        for (int t = 0; t < seq; ++t) {
            const double* xi = lc.x_in.row(t);
            const double* ai = att_out.row(t);
            double* mi = lc.x_mid.row(t);
            for (int i = 0; i < d; ++i) {
                mi[i] = xi[i] + ai[i];
            }
        }

        lc.n2 = Matrix(seq, d);
        lc.inv2.resize(static_cast<size_t>(seq));
        for (int t = 0; t < seq; ++t) {
            lc.inv2[static_cast<size_t>(t)] = rmsnorm_row(lc.x_mid.row(t), layer.norm2.data(), d, lc.n2.row(t));
        }

        lc.gate_pre = Matrix(seq, config.d_ff);
        lc.up_out = Matrix(seq, config.d_ff);
        project(layer.gate, lc.n2, lc.gate_pre, site_run(options.lora, l, Site::gate), options.lora,
                &lc.adapter_mask[static_cast<int>(Site::gate)]);
        project(layer.up, lc.n2, lc.up_out, site_run(options.lora, l, Site::up), options.lora,
                &lc.adapter_mask[static_cast<int>(Site::up)]);

        lc.mlp_h = Matrix(seq, config.d_ff);
        for (int t = 0; t < seq; ++t) {
            const double* g = lc.gate_pre.row(t);
            const double* u = lc.up_out.row(t);
            double* hrow = lc.mlp_h.row(t);
            for (int i = 0; i < config.d_ff; ++i) {
                hrow[i] = g[i] * sigmoid(g[i]) * u[i];
            }
        }

        Matrix mlp_out(seq, d);
        project(layer.down, lc.mlp_h, mlp_out, site_run(options.lora, l, Site::down), options.lora,
                &lc.adapter_mask[static_cast<int>(Site::down)]);

        x = Matrix(seq, d);
        for (int t = 0; t < seq; ++t) {
            const double* mi = lc.x_mid.row(t);
            const double* oi = mlp_out.row(t);
            double* xt = x.row(t);
            for (int i = 0; i < d; ++i) {
                xt[i] = mi[i] + oi[i];
            }
        }
    }

    cache.x_final = x;
    cache.inv_final.resize(static_cast<size_t>(seq));
    result.hidden.values = Matrix(seq, d);
    for (int t = 0; t < seq; ++t) {
        cache.inv_final[static_cast<size_t>(t)] =
            rmsnorm_row(x.row(t), params.final_norm.data(), d, result.hidden.values.row(t));
    }
    if (!all_finite(result.hidden.values.data)) {
        throw std::runtime_error("forward: non-finite hidden states");
    }
    if (!options.want_cache) {
        cache = ForwardCache{};
    }
    return result;
}

BackwardResult backward(const ModelConfig& config, const Parameters& params,
                        const ForwardCache& cache, const Matrix& upstream,
                        const LoraRuntime* lora) {
    const int seq = static_cast<int>(cache.ids.size());
    if (seq == 0) {
        throw std::invalid_argument("backward: empty cache (forward must run with want_cache)");
    }
    if (upstream.rows != seq || upstream.cols != config.d_model) {
        throw std::invalid_argument("backward: upstream gradient shape mismatch");
    }

    const int d = config.d_model;
    const int hd = config.head_dim();
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

    BackwardResult result;
    result.params = zero_like(config);
    if (lora != nullptr && lora->adapters != nullptr) {
        result.adapters = std::make_shared<AdapterGrads>(zero_adapter_grads(*lora->adapters));
    }

    auto site_grad = [&](int l, Site s) -> SiteAdapter* {
        if (!result.adapters) {
            return nullptr;
        }
        auto& slot = result.adapters->layers[static_cast<size_t>(l)][static_cast<int>(s)];
        return slot.has_value() ? &*slot : nullptr;
    };

    // final norm
    Matrix dx(seq, d);
    for (int t = 0; t < seq; ++t) {
        rmsnorm_backward_row(upstream.row(t), cache.x_final.row(t), params.final_norm.data(),
                             cache.inv_final[static_cast<size_t>(t)], d, dx.row(t),
                             result.params.final_norm.data());
    }

    for (int l = config.n_layers - 1; l >= 0; --l) {
        const LayerParams& layer = params.layers[static_cast<size_t>(l)];
        const LayerCache& lc = cache.layers[static_cast<size_t>(l)];
        LayerParams& glayer = result.params.layers[static_cast<size_t>(l)];

        // x_out = x_mid + down(mlp_h)
        Matrix dmlp_h(seq, config.d_ff);
        Matrix dx_mid = dx;  // residual branch
        project_backward(layer.down, lc.mlp_h, dx, glayer.down, dmlp_h,
                         site_run(lora, l, Site::down), lc.adapter_mask[static_cast<int>(Site::down)],
                         site_grad(l, Site::down));

        // mlp_h = silu(gate_pre) * up_out
        Matrix dgate(seq, config.d_ff);
        Matrix dup(seq, config.d_ff);
        for (int t = 0; t < seq; ++t) {
            const double* g = lc.gate_pre.row(t);
            const double* u = lc.up_out.row(t);
            const double* dh = dmlp_h.row(t);
            double* dg = dgate.row(t);
            double* du = dup.row(t);
            for (int i = 0; i < config.d_ff; ++i) {
                const double sg = sigmoid(g[i]);
                const double silu = g[i] * sg;
                du[i] = dh[i] * silu;
                dg[i] = dh[i] * u[i] * sg * (1.0 + g[i] * (1.0 - sg));
            }
        }

        Matrix dn2(seq, d);
        project_backward(layer.gate, lc.n2, dgate, glayer.gate, dn2, site_run(lora, l, Site::gate),
                         lc.adapter_mask[static_cast<int>(Site::gate)], site_grad(l, Site::gate));
        project_backward(layer.up, lc.n2, dup, glayer.up, dn2, site_run(lora, l, Site::up),
                         lc.adapter_mask[static_cast<int>(Site::up)], site_grad(l, Site::up));

        for (int t = 0; t < seq; ++t) {
            rmsnorm_backward_row(dn2.row(t), lc.x_mid.row(t), layer.norm2.data(),
                                 lc.inv2[static_cast<size_t>(t)], d, dx_mid.row(t), glayer.norm2.data());
        }

        // x_mid = x_in + o(ctx)
        Matrix dctx(seq, d);
        Matrix dx_in = dx_mid;  // residual branch
        project_backward(layer.o, lc.ctx, dx_mid, glayer.o, dctx, site_run(lora, l, Site::o),
                         lc.adapter_mask[static_cast<int>(Site::o)], site_grad(l, Site::o));

        Matrix dq_rot(seq, d);
        Matrix dk_rot(seq, d);
        Matrix dv(seq, d);
        std::vector<double> dprobs(static_cast<size_t>(seq));
        for (int h = 0; h < config.n_heads; ++h) {
            const Matrix& probs = lc.probs[static_cast<size_t>(h)];
            const int off = h * hd;
            for (int i = 0; i < seq; ++i) {
                const double* dctx_i = dctx.row(i) + off;
                const double* prow = probs.row(i);
                double inner = 0.0;
                for (int j = 0; j <= i; ++j) {
                    const double* vj = lc.v.row(j) + off;
                    double dp = 0.0;
                    for (int e = 0; e < hd; ++e) {
                        dp += dctx_i[e] * vj[e];
                    }
                    dprobs[static_cast<size_t>(j)] = dp;
                    inner += prow[j] * dp;
                    double* dvj = dv.row(j) + off;
                    for (int e = 0; e < hd; ++e) {
                        dvj[e] += prow[j] * dctx_i[e];
                    }
                }
                const double* qi = lc.q_rot.row(i) + off;
                double* dqi = dq_rot.row(i) + off;
                for (int j = 0; j <= i; ++j) {
                    const double dscore = prow[j] * (dprobs[static_cast<size_t>(j)] - inner) * inv_sqrt_hd;
                    const double* kj = lc.k_rot.row(j) + off;
                    double* dkj = dk_rot.row(j) + off;
                    for (int e = 0; e < hd; ++e) {
                        dqi[e] += dscore * kj[e];
                        dkj[e] += dscore * qi[e];
                    }
                }
            }
        }

        for (int t = 0; t < seq; ++t) {
            for (int h = 0; h < config.n_heads; ++h) {
                rope_rotate(dq_rot.row(t) + h * hd, hd, t, -1.0);
                rope_rotate(dk_rot.row(t) + h * hd, hd, t, -1.0);
            }
        }

        Matrix dn1(seq, d);
        project_backward(layer.q, lc.n1, dq_rot, glayer.q, dn1, site_run(lora, l, Site::q),
                         lc.adapter_mask[static_cast<int>(Site::q)], site_grad(l, Site::q));
        project_backward(layer.k, lc.n1, dk_rot, glayer.k, dn1, {}, Matrix{}, nullptr);
        project_backward(layer.v, lc.n1, dv, glayer.v, dn1, site_run(lora, l, Site::v),
                         lc.adapter_mask[static_cast<int>(Site::v)], site_grad(l, Site::v));

        for (int t = 0; t < seq; ++t) {
            rmsnorm_backward_row(dn1.row(t), lc.x_in.row(t), layer.norm1.data(),
                                 lc.inv1[static_cast<size_t>(t)], d, dx_in.row(t), glayer.norm1.data());
        }

        dx = std::move(dx_in);
    }

    for (int t = 0; t < seq; ++t) {
        double* erow = result.params.embedding.row(cache.ids[static_cast<size_t>(t)]);
        const double* dxt = dx.row(t);
        for (int i = 0; i < d; ++i) {
            erow[i] += dxt[i];
        }
    }
    return result;
}

void save_model(const ModelConfig& config, const Parameters& params, const std::string& path,
                const std::map<std::string, std::string>& extra_meta) {
    TensorFile file;
    file.meta = extra_meta;
    file.meta["kind"] = "model";
    nlohmann::json cfg;
    cfg["vocab_size"] = config.vocab_size;
    cfg["d_model"] = config.d_model;
    cfg["n_layers"] = config.n_layers;
    cfg["n_heads"] = config.n_heads;
    cfg["d_ff"] = config.d_ff;
    cfg["max_seq_len"] = config.max_seq_len;
    cfg["seed"] = config.seed;
    file.meta["config"] = cfg.dump();

    file.put("embedding", params.embedding);
    for (size_t l = 0; l < params.layers.size(); ++l) {
        const std::string prefix = "layers." + std::to_string(l) + ".";
        for (Site s : kAllSites) {
            file.put(prefix + site_name(s), params.layers[l].site(s));
        }
        file.put(prefix + "norm1", params.layers[l].norm1);
        file.put(prefix + "norm2", params.layers[l].norm2);
    }
    file.put("final_norm", params.final_norm);
    save_tensor_file(file, path);
}

std::pair<ModelConfig, Parameters> load_model(const std::string& path) {
    TensorFile file = load_tensor_file(path);
    auto meta_it = file.meta.find("config");
    if (file.meta["kind"] != "model" || meta_it == file.meta.end()) {
        throw std::runtime_error("load_model: " + path + " is not a model checkpoint");
    }
    nlohmann::json cfg = nlohmann::json::parse(meta_it->second);
    ModelConfig config;
    config.vocab_size = cfg["vocab_size"].get<int>();
    config.d_model = cfg["d_model"].get<int>();
    config.n_layers = cfg["n_layers"].get<int>();
    config.n_heads = cfg["n_heads"].get<int>();
    config.d_ff = cfg["d_ff"].get<int>();
    config.max_seq_len = cfg["max_seq_len"].get<int>();
    config.seed = cfg["seed"].get<uint64_t>();
    config.validate();

    Parameters params;
    params.embedding = file.get_matrix("embedding", config.vocab_size, config.d_model);
    params.layers.resize(static_cast<size_t>(config.n_layers));
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string prefix = "layers." + std::to_string(l) + ".";
        LayerParams& layer = params.layers[static_cast<size_t>(l)];
        layer.q = file.get_matrix(prefix + "q", config.d_model, config.d_model);
        layer.k = file.get_matrix(prefix + "k", config.d_model, config.d_model);
        layer.v = file.get_matrix(prefix + "v", config.d_model, config.d_model);
        layer.o = file.get_matrix(prefix + "o", config.d_model, config.d_model);
        layer.gate = file.get_matrix(prefix + "gate", config.d_ff, config.d_model);
        layer.up = file.get_matrix(prefix + "up", config.d_ff, config.d_model);
        layer.down = file.get_matrix(prefix + "down", config.d_model, config.d_ff);
        layer.norm1 = file.get_vector(prefix + "norm1", config.d_model);
        layer.norm2 = file.get_vector(prefix + "norm2", config.d_model);
    }
    params.final_norm = file.get_vector("final_norm", config.d_model);
    return {config, params};
}

uint64_t parameter_checksum(const Parameters& params) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    auto feed = [&h](const std::vector<double>& values) {
        for (double v : values) {
            uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xffULL;
                h *= 1099511628211ULL;
            }
        }
    };
    feed(params.embedding.data);
    for (const LayerParams& layer : params.layers) {
        for (Site s : kAllSites) {
            feed(layer.site(s).data);
        }
        feed(layer.norm1);
        feed(layer.norm2);
    }
    feed(params.final_norm);
    return h;
}

}  // namespace tinyembed
