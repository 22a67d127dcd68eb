#include "acc/checkpoint.hpp"

#include <fstream>

#include "acc/binio.hpp"

namespace acc {

namespace {

constexpr char kCheckpointMagic[8] = {'A', 'C', 'C', 'C', 'K', 'P', 'T', '1'};

void write_layer(std::ostream& os, const DenseLayer& layer) {
    binio::write_u64(os, layer.weight.rows);
    binio::write_u64(os, layer.weight.cols);
    binio::write_f64_span(os, layer.weight.data.data(), layer.weight.data.size());
    binio::write_u64(os, layer.bias.size());
    binio::write_f64_span(os, layer.bias.data(), layer.bias.size());
}

DenseLayer read_layer(std::istream& is) {
    DenseLayer layer;
    const std::uint64_t rows = binio::read_u64(is);
    const std::uint64_t cols = binio::read_u64(is);
    layer.weight = Matrix(rows, cols);
    binio::read_f64_span(is, layer.weight.data.data(), layer.weight.data.size());
    layer.bias.resize(binio::read_u64(is));
    binio::read_f64_span(is, layer.bias.data(), layer.bias.size());
    return layer;
}

void write_mlp(std::ostream& os, const MlpParams& params) {
    binio::write_u64(os, params.layers.size());
    for (const DenseLayer& layer : params.layers) write_layer(os, layer);
}

MlpParams read_mlp(std::istream& is) {
    MlpParams params;
    params.layers.resize(binio::read_u64(is));
    for (DenseLayer& layer : params.layers) layer = read_layer(is);
    return params;
}

void write_side(std::ostream& os, const ModalityEncoders& enc) {
    write_mlp(os, enc.query_params);
    write_mlp(os, enc.key_params);
    binio::write_u32(os, enc.head ? 1 : 0);
    if (enc.head) {
        write_layer(os, enc.head->query);
        write_layer(os, enc.head->key);
    }
}

ModalityEncoders read_side(std::istream& is) {
    ModalityEncoders enc;
    enc.query_params = read_mlp(is);
    enc.key_params = read_mlp(is);
    if (binio::read_u32(is) != 0) {
        HeadPair head;
        head.query = read_layer(is);
        head.key = read_layer(is);
        enc.head = std::move(head);
    }
    return enc;
}

void write_adam(std::ostream& os, const AdamState& state) {
    write_mlp(os, state.first_moment);
    write_mlp(os, state.second_moment);
    binio::write_u64(os, static_cast<std::uint64_t>(state.step));
    binio::write_f64(os, state.beta1);
    binio::write_f64(os, state.beta2);
    binio::write_f64(os, state.epsilon);
}

AdamState read_adam(std::istream& is) {
    AdamState state;
    state.first_moment = read_mlp(is);
    state.second_moment = read_mlp(is);
    state.step = static_cast<std::int64_t>(binio::read_u64(is));
    state.beta1 = binio::read_f64(is);
    state.beta2 = binio::read_f64(is);
    state.epsilon = binio::read_f64(is);
    return state;
}

bool layers_equal(const DenseLayer& a, const DenseLayer& b) {
    return a.weight.rows == b.weight.rows && a.weight.cols == b.weight.cols &&
           a.weight.data == b.weight.data && a.bias == b.bias;
}

bool mlps_equal(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (!layers_equal(a.layers[l], b.layers[l])) return false;
    }
    return true;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    binio::write_magic(os, kCheckpointMagic);
    binio::write_u32(os, 1);  // version
    binio::write_f64(os, ckpt.bundle.momentum);
    binio::write_f64(os, ckpt.bundle.temperature);
    write_side(os, ckpt.bundle.visual);
    write_side(os, ckpt.bundle.audio);
    write_adam(os, ckpt.adam_visual);
    write_adam(os, ckpt.adam_audio);
    binio::write_u64(os, ckpt.steps_taken);
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    binio::expect_magic(is, kCheckpointMagic, "load_checkpoint");
    if (binio::read_u32(is) != 1) throw std::runtime_error("load_checkpoint: unsupported version");
    Checkpoint ckpt;
    ckpt.bundle.momentum = binio::read_f64(is);
    ckpt.bundle.temperature = binio::read_f64(is);
    ckpt.bundle.visual = read_side(is);
    ckpt.bundle.audio = read_side(is);
    ckpt.adam_visual = read_adam(is);
    ckpt.adam_audio = read_adam(is);
    ckpt.steps_taken = binio::read_u64(is);
    return ckpt;
}

bool bundles_equal(const EncoderBundle& a, const EncoderBundle& b) {
    if (a.momentum != b.momentum || a.temperature != b.temperature) return false;
    for (Modality m : {Modality::visual, Modality::audio}) {
        const ModalityEncoders& x = a.side(m);
        const ModalityEncoders& y = b.side(m);
        if (!mlps_equal(x.query_params, y.query_params)) return false;
        if (!mlps_equal(x.key_params, y.key_params)) return false;
        if (x.head.has_value() != y.head.has_value()) return false;
        if (x.head && (!layers_equal(x.head->query, y.head->query) ||
                       !layers_equal(x.head->key, y.head->key))) {
            return false;
        }
    }
    return true;
}

}  // namespace acc
