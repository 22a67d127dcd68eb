#include "acc/encoders.hpp"

#include "acc/parallel.hpp"

namespace acc {

Modality opposite(Modality m) {
    return m == Modality::visual ? Modality::audio : Modality::visual;
}

std::size_t EncoderBundle::embedding_dim() const {
    return query_composite(visual).output_dim();
}

EncoderBundle make_bundle(const BundleConfig& config, Rng& rng) {
    if (config.visual_input_dim == 0 || config.audio_input_dim == 0) {
        throw ShapeError("make_bundle: input dims must be positive");
    }
    EncoderBundle bundle;
    bundle.momentum = config.momentum;
    bundle.temperature = config.temperature;

    auto build_side = [&](std::size_t input_dim) {
        ModalityEncoders enc;
        enc.query_params = make_mlp({input_dim, config.hidden_dim, config.embed_dim},
                                    config.init, rng);
        if (config.heads_enabled) {
            HeadPair head;
            MlpParams h = make_mlp({config.embed_dim, config.embed_dim}, config.init, rng);
            head.query = h.layers[0];
            head.key = head.query;
            enc.head = std::move(head);
        }
        enc.key_params = enc.query_params;
        return enc;
    };
    bundle.visual = build_side(config.visual_input_dim);
    bundle.audio = build_side(config.audio_input_dim);
    return bundle;
}

namespace {

MlpParams composite(const MlpParams& base, const std::optional<HeadPair>& head, bool query_side) {
    MlpParams stack = base;
    if (head) {
        stack.layers.push_back(query_side ? head->query : head->key);
    }
    return stack;
}

}  // namespace

MlpParams query_composite(const ModalityEncoders& enc) {
    return composite(enc.query_params, enc.head, true);
}

MlpParams key_composite(const ModalityEncoders& enc) {
    return composite(enc.key_params, enc.head, false);
}

void store_query_composite(ModalityEncoders& enc, const MlpParams& stack) {
    const std::size_t base_depth = enc.query_params.layers.size();
    const std::size_t expected = base_depth + (enc.head ? 1 : 0);
    if (stack.layers.size() != expected) {
        throw ShapeError("store_query_composite: depth mismatch");
    }
    for (std::size_t l = 0; l < base_depth; ++l) {
        enc.query_params.layers[l] = stack.layers[l];
    }
    if (enc.head) {
        enc.head->query = stack.layers[base_depth];
    }
}

namespace {

template <bool kParallel>
BatchEncoding encode_query_impl(const EncoderBundle& bundle, Modality m, const Matrix& batch) {
    const MlpParams stack = query_composite(bundle.side(m));
    if (batch.cols != stack.input_dim()) {
        throw ShapeError("encode_query: input dim mismatch");
    }
    BatchEncoding out;
    out.embeddings = Matrix(batch.rows, stack.output_dim());
    out.caches.resize(batch.rows);
    auto body = [&](std::size_t i) {
        Vec raw = mlp_forward(stack, batch.row_vec(i), &out.caches[i]);
        out.embeddings.set_row(i, l2_normalize(raw));
    };
    if constexpr (kParallel) {
        parallel_for(batch.rows, body);
    } else {
        for (std::size_t i = 0; i < batch.rows; ++i) body(i);
    }
    return out;
}

template <bool kParallel>
Matrix encode_key_impl(const EncoderBundle& bundle, Modality m, const Matrix& batch) {
    const MlpParams stack = key_composite(bundle.side(m));
    if (batch.cols != stack.input_dim()) {
        throw ShapeError("encode_key: input dim mismatch");
    }
    Matrix out(batch.rows, stack.output_dim());
    auto body = [&](std::size_t i) {
        out.set_row(i, l2_normalize(mlp_apply(stack, batch.row_vec(i))));
    };
    if constexpr (kParallel) {
        parallel_for(batch.rows, body);
    } else {
        for (std::size_t i = 0; i < batch.rows; ++i) body(i);
    }
    return out;
}

}  // namespace

BatchEncoding encode_query(const EncoderBundle& bundle, Modality m, const Matrix& batch) {
    return encode_query_impl<true>(bundle, m, batch);
}

BatchEncoding encode_query_serial(const EncoderBundle& bundle, Modality m, const Matrix& batch) {
    return encode_query_impl<false>(bundle, m, batch);
}

Matrix encode_key(const EncoderBundle& bundle, Modality m, const Matrix& batch) {
    return encode_key_impl<true>(bundle, m, batch);
}

Matrix encode_key_serial(const EncoderBundle& bundle, Modality m, const Matrix& batch) {
    return encode_key_impl<false>(bundle, m, batch);
}

namespace {

void momentum_blend(DenseLayer& key, const DenseLayer& query, double m) {
    if (key.weight.rows != query.weight.rows || key.weight.cols != query.weight.cols ||
        key.bias.size() != query.bias.size()) {
        throw ShapeError("momentum update: shape mismatch");
    }
    for (std::size_t i = 0; i < key.weight.data.size(); ++i) {
        key.weight.data[i] = m * key.weight.data[i] + (1.0 - m) * query.weight.data[i];
    }
    for (std::size_t i = 0; i < key.bias.size(); ++i) {
        key.bias[i] = m * key.bias[i] + (1.0 - m) * query.bias[i];
    }
}

}  // namespace

void momentum_update(EncoderBundle& bundle, Modality modality) {
    ModalityEncoders& enc = bundle.side(modality);
    if (enc.key_params.layers.size() != enc.query_params.layers.size()) {
        throw ShapeError("momentum_update: depth mismatch");
    }
    for (std::size_t l = 0; l < enc.key_params.layers.size(); ++l) {
        momentum_blend(enc.key_params.layers[l], enc.query_params.layers[l], bundle.momentum);
    }
}

void cross_modal_head_update(EncoderBundle& bundle) {
    if (!bundle.visual.head || !bundle.audio.head) {
        throw FeatureDisabledError("cross_modal_head_update: heads are disabled");
    }
    // Audio key head follows the visual query head and vice versa.
    momentum_blend(bundle.audio.head->key, bundle.visual.head->query, bundle.momentum);
    momentum_blend(bundle.visual.head->key, bundle.audio.head->query, bundle.momentum);
}

}  // namespace acc
