#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "acc/errors.hpp"
#include "acc/rng.hpp"

namespace acc {

using Vec = std::vector<double>;

// Dense row-major matrix of 64-bit reals. Also used as a batch container
// (one sample per row).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    Vec row_vec(std::size_t r) const {
        return Vec(row(r), row(r) + cols);
    }

    void set_row(std::size_t r, const Vec& v);
};

double dot(const Vec& a, const Vec& b);
double norm_sq(const Vec& v);
double norm(const Vec& v);

// v / ||v||. Throws DegenerateInputError on the zero vector.
Vec l2_normalize(const Vec& v);

// Chain rule through y = x / ||x||: maps dL/dy to dL/dx given the raw x.
Vec l2_normalize_backward(const Vec& raw, const Vec& grad_wrt_unit);

// Numerically stable softmax of logits / temperature (max subtraction).
// Throws std::invalid_argument on non-finite logits or temperature <= 0.
Vec softmax(const Vec& logits, double temperature);

// -log probs[label]. Throws std::out_of_range when label >= probs.size().
double cross_entropy(const Vec& probs, std::size_t label);

// Index of the largest element; ties resolve to the lowest index.
std::size_t argmax(const Vec& v);

// ---------------------------------------------------------------------------
// Small fully-connected nets: relu on hidden layers, identity on the final
// layer. Parameters and gradients share one shape so the optimizer can walk
// them in lockstep.

struct DenseLayer {
    Matrix weight;  // out x in
    Vec bias;       // out
};

struct MlpParams {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.front().weight.cols; }
    std::size_t output_dim() const { return layers.back().weight.rows; }
};

using MlpGrads = MlpParams;  // same nesting, entries hold d(loss)/d(param)

enum class InitScheme {
    fan_in_uniform,  // Uniform(-s, s), s = 1/sqrt(fan_in)
    uniform01,       // literal Uniform(0, 1), kept for fidelity experiments
};

// Fresh net with the given layer widths (dims = {in, hidden..., out}).
MlpParams make_mlp(const std::vector<std::size_t>& dims, InitScheme scheme, Rng& rng);

// Per-layer tensors recorded by a forward pass; inputs[l] feeds layer l and
// preacts[l] is its affine output. The input to the final layer is the
// penultimate activation consumed by the gradient-embedding machinery.
struct ForwardCache {
    std::vector<Vec> inputs;
    std::vector<Vec> preacts;

    const Vec& output() const { return preacts.back(); }
    const Vec& penultimate() const { return inputs.back(); }
};

// Affine/relu stack evaluation. Throws ShapeError on input dim mismatch.
Vec mlp_forward(const MlpParams& params, const Vec& input, ForwardCache* cache);

// Convenience overload when no cache is wanted.
Vec mlp_apply(const MlpParams& params, const Vec& input);

// Backprop of output_grad (= dL/d output) through a cached forward pass.
// Throws ShapeError when the cache does not match the params.
MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache, const Vec& output_grad);

MlpGrads zero_grads_like(const MlpParams& params);
void accumulate(MlpGrads& into, const MlpGrads& delta);
void scale(MlpGrads& grads, double factor);

// ---------------------------------------------------------------------------
// Adam with bias correction.

struct AdamState {
    MlpParams first_moment;
    MlpParams second_moment;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam_state(const MlpParams& params);

// One optimizer step; increments state.step. Throws ShapeError on any
// mismatch between params, grads and state.
void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state, double lr);

// Shape helpers shared by the optimizer and the checkpoint code.
bool same_shape(const MlpParams& a, const MlpParams& b);
std::size_t parameter_count(const MlpParams& params);

}  // namespace acc
