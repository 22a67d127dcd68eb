#pragma once

#include <optional>
#include <vector>

#include "acc/numerics.hpp"

namespace acc {

enum class Modality { visual, audio };

Modality opposite(Modality m);

// Optional fully-connected projection on top of an encoder pair. The key-side
// head is momentum-tied to the opposite modality's query-side head, which is
// the cross-modal coupling the heads exist for.
struct HeadPair {
    DenseLayer query;
    DenseLayer key;
};

// Query/key encoder pair for one modality. Query params learn by backprop;
// key params only ever move through momentum updates.
struct ModalityEncoders {
    MlpParams query_params;
    MlpParams key_params;
    std::optional<HeadPair> head;
};

struct EncoderBundle {
    ModalityEncoders visual;
    ModalityEncoders audio;
    double momentum = 0.999;
    double temperature = 0.7;

    ModalityEncoders& side(Modality m) { return m == Modality::visual ? visual : audio; }
    const ModalityEncoders& side(Modality m) const {
        return m == Modality::visual ? visual : audio;
    }

    std::size_t embedding_dim() const;
};

struct BundleConfig {
    std::size_t visual_input_dim = 0;
    std::size_t audio_input_dim = 0;
    std::size_t hidden_dim = 64;
    std::size_t embed_dim = 32;
    double momentum = 0.999;
    double temperature = 0.7;
    bool heads_enabled = false;
    InitScheme init = InitScheme::fan_in_uniform;
};

// Fresh bundle; key params start as exact copies of query params.
EncoderBundle make_bundle(const BundleConfig& config, Rng& rng);

// Base net plus the optional head flattened into a single stack, so forward,
// backward and the optimizer can treat each query encoder as one MLP. The
// head, when present, is the stack's final layer.
MlpParams query_composite(const ModalityEncoders& enc);
MlpParams key_composite(const ModalityEncoders& enc);

// Scatter a composite stack (same shape as query_composite) back into the
// base params and head.
void store_query_composite(ModalityEncoders& enc, const MlpParams& composite);

// Batch of L2-normalized query embeddings with per-sample forward caches
// (the caches feed both backprop and candidate scoring).
struct BatchEncoding {
    Matrix embeddings;
    std::vector<ForwardCache> caches;
};

// Data-parallel kernels with serial references kept for testing; the two
// variants are elementwise identical for any worker count.
BatchEncoding encode_query(const EncoderBundle& bundle, Modality m, const Matrix& batch);
BatchEncoding encode_query_serial(const EncoderBundle& bundle, Modality m, const Matrix& batch);
Matrix encode_key(const EncoderBundle& bundle, Modality m, const Matrix& batch);
Matrix encode_key_serial(const EncoderBundle& bundle, Modality m, const Matrix& batch);

// theta_k <- m * theta_k + (1 - m) * theta_q, elementwise, on the base nets.
void momentum_update(EncoderBundle& bundle, Modality m);

// Cross-modal head tie: each key head moves toward the opposite modality's
// query head. Throws FeatureDisabledError when heads are off.
void cross_modal_head_update(EncoderBundle& bundle);

}  // namespace acc
