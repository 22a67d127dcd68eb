#include "acc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace acc {

void Matrix::set_row(std::size_t r, const Vec& v) {
    if (v.size() != cols) throw ShapeError("Matrix::set_row: length != cols");
    std::copy(v.begin(), v.end(), row(r));
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm_sq(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double norm(const Vec& v) { return std::sqrt(norm_sq(v)); }

Vec l2_normalize(const Vec& v) {
    const double n = norm(v);
    if (n == 0.0) throw DegenerateInputError("l2_normalize: zero vector");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

Vec l2_normalize_backward(const Vec& raw, const Vec& grad_wrt_unit) {
    if (raw.size() != grad_wrt_unit.size()) {
        throw ShapeError("l2_normalize_backward: length mismatch");
    }
    const double n = norm(raw);
    if (n == 0.0) throw DegenerateInputError("l2_normalize_backward: zero vector");
    // d(x/||x||) applied to g: (g - y (y.g)) / ||x||, y = x/||x||.
    Vec unit(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) unit[i] = raw[i] / n;
    const double proj = dot(unit, grad_wrt_unit);
    Vec out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = (grad_wrt_unit[i] - unit[i] * proj) / n;
    }
    return out;
}

Vec softmax(const Vec& logits, double temperature) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw std::invalid_argument("softmax: temperature must be positive");
    }
    for (double x : logits) {
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite logit");
    }
    Vec scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
    const double m = *std::max_element(scaled.begin(), scaled.end());
    double total = 0.0;
    Vec out(scaled.size());
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        out[i] = std::exp(scaled[i] - m);
        total += out[i];
    }
    for (double& p : out) p /= total;
    return out;
}

double cross_entropy(const Vec& probs, std::size_t label) {
    if (label >= probs.size()) throw std::out_of_range("cross_entropy: label out of range");
    return -std::log(probs[label]);
}

std::size_t argmax(const Vec& v) {
    if (v.empty()) throw std::invalid_argument("argmax: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

MlpParams make_mlp(const std::vector<std::size_t>& dims, InitScheme scheme, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least in/out dims");
    MlpParams params;
    params.layers.reserve(dims.size() - 1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer layer;
        layer.weight = Matrix(dims[l + 1], dims[l]);
        layer.bias.assign(dims[l + 1], 0.0);
        if (scheme == InitScheme::uniform01) {
            for (double& w : layer.weight.data) w = rng.next_double();
            for (double& b : layer.bias) b = rng.next_double();
        } else {
            const double s = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            for (double& w : layer.weight.data) w = (2.0 * rng.next_double() - 1.0) * s;
            for (double& b : layer.bias) b = (2.0 * rng.next_double() - 1.0) * s;
        }
        params.layers.push_back(std::move(layer));
    }
    return params;
}

namespace {

Vec affine(const DenseLayer& layer, const Vec& x) {
    const Matrix& w = layer.weight;
    Vec y(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double* wr = w.row(r);
        double s = layer.bias[r];
        for (std::size_t c = 0; c < w.cols; ++c) s += wr[c] * x[c];
        y[r] = s;
    }
    return y;
}

}  // namespace

Vec mlp_forward(const MlpParams& params, const Vec& input, ForwardCache* cache) {
    if (params.layers.empty()) throw ShapeError("mlp_forward: no layers");
    if (input.size() != params.input_dim()) {
        throw ShapeError("mlp_forward: input dim mismatch");
    }
    if (cache) {
        cache->inputs.clear();
        cache->preacts.clear();
        cache->inputs.reserve(params.layers.size());
        cache->preacts.reserve(params.layers.size());
    }
    Vec x = input;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        if (x.size() != params.layers[l].weight.cols) {
            throw ShapeError("mlp_forward: layer dim mismatch");
        }
        Vec pre = affine(params.layers[l], x);
        if (cache) {
            cache->inputs.push_back(std::move(x));
            cache->preacts.push_back(pre);
        }
        if (l + 1 < params.layers.size()) {
            for (double& v : pre) v = v > 0.0 ? v : 0.0;  // relu
        }
        x = std::move(pre);
    }
    return x;
}

Vec mlp_apply(const MlpParams& params, const Vec& input) {
    return mlp_forward(params, input, nullptr);
}

MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache, const Vec& output_grad) {
    const std::size_t depth = params.layers.size();
    if (cache.inputs.size() != depth || cache.preacts.size() != depth) {
        throw ShapeError("mlp_backward: cache depth mismatch");
    }
    if (output_grad.size() != params.output_dim()) {
        throw ShapeError("mlp_backward: output grad dim mismatch");
    }
    MlpGrads grads = zero_grads_like(params);
    Vec g = output_grad;  // dL/d preact of the current layer
    for (std::size_t l = depth; l-- > 0;) {
        const DenseLayer& layer = params.layers[l];
        const Vec& x = cache.inputs[l];
        if (x.size() != layer.weight.cols) throw ShapeError("mlp_backward: cache shape mismatch");
        Matrix& dw = grads.layers[l].weight;
        Vec& db = grads.layers[l].bias;
        for (std::size_t r = 0; r < layer.weight.rows; ++r) {
            double* dwr = dw.row(r);
            const double gr = g[r];
            for (std::size_t c = 0; c < layer.weight.cols; ++c) dwr[c] += gr * x[c];
            db[r] += gr;
        }
        if (l == 0) break;
        Vec gx(layer.weight.cols, 0.0);
        for (std::size_t r = 0; r < layer.weight.rows; ++r) {
            const double* wr = layer.weight.row(r);
            const double gr = g[r];
            for (std::size_t c = 0; c < layer.weight.cols; ++c) gx[c] += wr[c] * gr;
        }
        // relu mask from the previous layer's preactivation
        const Vec& pre = cache.preacts[l - 1];
        for (std::size_t c = 0; c < gx.size(); ++c) {
            if (pre[c] <= 0.0) gx[c] = 0.0;
        }
        g = std::move(gx);
    }
    return grads;
}

MlpGrads zero_grads_like(const MlpParams& params) {
    MlpGrads grads;
    grads.layers.reserve(params.layers.size());
    for (const DenseLayer& layer : params.layers) {
        DenseLayer zero;
        zero.weight = Matrix(layer.weight.rows, layer.weight.cols);
        zero.bias.assign(layer.bias.size(), 0.0);
        grads.layers.push_back(std::move(zero));
    }
    return grads;
}

void accumulate(MlpGrads& into, const MlpGrads& delta) {
    if (!same_shape(into, delta)) throw ShapeError("accumulate: shape mismatch");
    for (std::size_t l = 0; l < into.layers.size(); ++l) {
        auto& a = into.layers[l];
        const auto& b = delta.layers[l];
        for (std::size_t i = 0; i < a.weight.data.size(); ++i) a.weight.data[i] += b.weight.data[i];
        for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
    }
}

void scale(MlpGrads& grads, double factor) {
    for (auto& layer : grads.layers) {
        for (double& w : layer.weight.data) w *= factor;
        for (double& b : layer.bias) b *= factor;
    }
}

AdamState make_adam_state(const MlpParams& params) {
    AdamState state;
    state.first_moment = zero_grads_like(params);
    state.second_moment = zero_grads_like(params);
    return state;
}

bool same_shape(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].weight.rows != b.layers[l].weight.rows) return false;
        if (a.layers[l].weight.cols != b.layers[l].weight.cols) return false;
        if (a.layers[l].bias.size() != b.layers[l].bias.size()) return false;
    }
    return true;
}

std::size_t parameter_count(const MlpParams& params) {
    std::size_t n = 0;
    for (const auto& layer : params.layers) n += layer.weight.data.size() + layer.bias.size();
    return n;
}

namespace {

void adam_update_span(double* p, const double* g, double* m, double* v, std::size_t n,
                      double lr, double beta1, double beta2, double eps,
                      double bias1, double bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state, double lr) {
    if (!same_shape(params, grads) || !same_shape(params, state.first_moment)) {
        throw ShapeError("adam_step: shape mismatch");
    }
    state.step += 1;
    const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        const auto& g = grads.layers[l];
        auto& m = state.first_moment.layers[l];
        auto& v = state.second_moment.layers[l];
        adam_update_span(layer.weight.data.data(), g.weight.data.data(),
                         m.weight.data.data(), v.weight.data.data(),
                         layer.weight.data.size(), lr, state.beta1, state.beta2,
                         state.epsilon, bias1, bias2);
        adam_update_span(layer.bias.data(), g.bias.data(), m.bias.data(), v.bias.data(),
                         layer.bias.size(), lr, state.beta1, state.beta2,
                         state.epsilon, bias1, bias2);
    }
}

}  // namespace acc
