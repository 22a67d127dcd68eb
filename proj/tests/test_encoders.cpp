#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "acc/checkpoint.hpp"
#include "acc/encoders.hpp"

using namespace acc;

namespace {

EncoderBundle small_bundle(bool heads, std::uint64_t seed = 31) {
    Rng rng(seed);
    BundleConfig bc;
    bc.visual_input_dim = 5;
    bc.audio_input_dim = 4;
    bc.hidden_dim = 6;
    bc.embed_dim = 3;
    bc.momentum = 0.999;
    bc.heads_enabled = heads;
    return make_bundle(bc, rng);
}

Matrix random_batch(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.next_normal();
    return m;
}

}  // namespace

TEST_CASE("encode_query: identity net returns the normalized input") {
    EncoderBundle bundle = small_bundle(false);
    MlpParams identity;
    identity.layers.push_back({Matrix(3, 3), Vec(3, 0.0)});
    for (std::size_t i = 0; i < 3; ++i) identity.layers[0].weight.at(i, i) = 1.0;
    bundle.visual.query_params = identity;

    Matrix batch(1, 3);
    batch.set_row(0, {3.0, 0.0, 4.0});
    const BatchEncoding enc = encode_query(bundle, Modality::visual, batch);
    CHECK(enc.embeddings.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(enc.embeddings.at(0, 2) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(enc.caches.size() == 1);
}

TEST_CASE("encode_query: deterministic and unit-norm") {
    const EncoderBundle bundle = small_bundle(false);
    Rng rng(32);
    const Matrix batch = random_batch(9, 5, rng);
    const BatchEncoding a = encode_query(bundle, Modality::visual, batch);
    const BatchEncoding b = encode_query(bundle, Modality::visual, batch);
    CHECK(a.embeddings.data == b.embeddings.data);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        const Vec e = a.embeddings.row_vec(i);
        CHECK(std::abs(dot(e, e) - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(encode_query(bundle, Modality::visual, random_batch(2, 4, rng)), ShapeError);
}

TEST_CASE("encode_key: equals encode_query on a fresh bundle, unit norms") {
    const EncoderBundle bundle = small_bundle(false);
    Rng rng(33);
    const Matrix batch = random_batch(6, 4, rng);
    const Matrix keys = encode_key(bundle, Modality::audio, batch);
    const BatchEncoding queries = encode_query(bundle, Modality::audio, batch);
    CHECK(keys.data == queries.embeddings.data);  // theta_k starts as a copy
    for (std::size_t i = 0; i < batch.rows; ++i) {
        const Vec e = keys.row_vec(i);
        CHECK(std::abs(dot(e, e) - 1.0) < 1e-12);
    }
}

TEST_CASE("momentum_update: m=0 copies, m=1 freezes, scalar arithmetic") {
    EncoderBundle bundle = small_bundle(false);
    for (double& w : bundle.visual.query_params.layers[0].weight.data) w += 0.25;

    EncoderBundle frozen = bundle;
    frozen.momentum = 1.0;
    momentum_update(frozen, Modality::visual);
    Rng rng(34);
    const Matrix batch = random_batch(3, 5, rng);
    CHECK(encode_key(frozen, Modality::visual, batch).data ==
          encode_key(bundle, Modality::visual, batch).data);

    EncoderBundle copied = bundle;
    copied.momentum = 0.0;
    momentum_update(copied, Modality::visual);
    for (std::size_t l = 0; l < copied.visual.key_params.layers.size(); ++l) {
        CHECK(copied.visual.key_params.layers[l].weight.data ==
              copied.visual.query_params.layers[l].weight.data);
        CHECK(copied.visual.key_params.layers[l].bias ==
              copied.visual.query_params.layers[l].bias);
    }

    // Scalar case at the reference momentum: k=0, q=1 -> 0.001.
    EncoderBundle scalar = bundle;
    scalar.momentum = 0.999;
    scalar.visual.key_params.layers[0].weight.at(0, 0) = 0.0;
    scalar.visual.query_params.layers[0].weight.at(0, 0) = 1.0;
    momentum_update(scalar, Modality::visual);
    CHECK(scalar.visual.key_params.layers[0].weight.at(0, 0) ==
          doctest::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("momentum_update: contraction toward query params and geometric convergence") {
    EncoderBundle bundle = small_bundle(false);
    Rng rng(35);
    for (auto& layer : bundle.visual.key_params.layers) {
        for (double& w : layer.weight.data) w += rng.next_normal() * 0.3;
    }
    bundle.momentum = 0.8;

    const MlpParams before = bundle.visual.key_params;
    momentum_update(bundle, Modality::visual);
    for (std::size_t l = 0; l < before.layers.size(); ++l) {
        for (std::size_t i = 0; i < before.layers[l].weight.data.size(); ++i) {
            const double q = bundle.visual.query_params.layers[l].weight.data[i];
            const double gap_before = std::abs(before.layers[l].weight.data[i] - q);
            const double gap_after =
                std::abs(bundle.visual.key_params.layers[l].weight.data[i] - q);
            CHECK(gap_after == doctest::Approx(0.8 * gap_before).epsilon(1e-10));
        }
    }

    for (int step = 0; step < 200; ++step) momentum_update(bundle, Modality::visual);
    for (std::size_t l = 0; l < before.layers.size(); ++l) {
        for (std::size_t i = 0; i < before.layers[l].weight.data.size(); ++i) {
            const double q = bundle.visual.query_params.layers[l].weight.data[i];
            CHECK(std::abs(bundle.visual.key_params.layers[l].weight.data[i] - q) < 1e-12);
        }
    }
}

TEST_CASE("cross_modal_head_update: tie direction, extremes, disabled error") {
    EncoderBundle no_heads = small_bundle(false);
    CHECK_THROWS_AS(cross_modal_head_update(no_heads), FeatureDisabledError);

    EncoderBundle bundle = small_bundle(true, 36);
    REQUIRE(bundle.visual.head.has_value());

    // Scalar oracle at m=0.999: audio key head 0, visual query head 1 -> 0.001.
    bundle.momentum = 0.999;
    bundle.audio.head->key.weight.at(0, 0) = 0.0;
    bundle.visual.head->query.weight.at(0, 0) = 1.0;
    cross_modal_head_update(bundle);
    CHECK(bundle.audio.head->key.weight.at(0, 0) == doctest::Approx(0.001).epsilon(1e-12));

    // m=0 copies the opposite modality's query head wholesale.
    EncoderBundle copy_case = small_bundle(true, 37);
    copy_case.momentum = 0.0;
    cross_modal_head_update(copy_case);
    CHECK(copy_case.audio.head->key.weight.data == copy_case.visual.head->query.weight.data);
    CHECK(copy_case.visual.head->key.weight.data == copy_case.audio.head->query.weight.data);

    // m=1 leaves both key heads untouched.
    EncoderBundle frozen = small_bundle(true, 38);
    const Vec before_a = frozen.audio.head->key.weight.data;
    const Vec before_v = frozen.visual.head->key.weight.data;
    frozen.momentum = 1.0;
    cross_modal_head_update(frozen);
    CHECK(frozen.audio.head->key.weight.data == before_a);
    CHECK(frozen.visual.head->key.weight.data == before_v);
}

TEST_CASE("heads: composite stacks append the head as the final layer") {
    const EncoderBundle bundle = small_bundle(true, 39);
    const MlpParams stack = query_composite(bundle.visual);
    CHECK(stack.layers.size() == bundle.visual.query_params.layers.size() + 1);
    CHECK(stack.output_dim() == 3);

    // Embeddings produced with heads differ from the base net's output.
    Rng rng(40);
    const Matrix batch = random_batch(2, 5, rng);
    EncoderBundle base_only = bundle;
    base_only.visual.head.reset();
    base_only.audio.head.reset();
    CHECK(encode_query(bundle, Modality::visual, batch).embeddings.data !=
          encode_query(base_only, Modality::visual, batch).embeddings.data);
}

TEST_CASE("uniform01 init stays available for fidelity runs") {
    Rng rng(41);
    BundleConfig bc;
    bc.visual_input_dim = 3;
    bc.audio_input_dim = 3;
    bc.hidden_dim = 4;
    bc.embed_dim = 2;
    bc.init = InitScheme::uniform01;
    const EncoderBundle bundle = make_bundle(bc, rng);
    for (double w : bundle.visual.query_params.layers[0].weight.data) {
        CHECK(w >= 0.0);
        CHECK(w < 1.0);
    }
}

TEST_CASE("checkpoint: round trip is bit-exact including optimizer state") {
    EncoderBundle bundle = small_bundle(true, 42);
    Checkpoint ckpt;
    ckpt.bundle = bundle;
    ckpt.adam_visual = make_adam_state(query_composite(bundle.visual));
    ckpt.adam_audio = make_adam_state(query_composite(bundle.audio));
    Rng rng(43);
    for (auto& layer : ckpt.adam_visual.first_moment.layers) {
        for (double& w : layer.weight.data) w = rng.next_normal();
    }
    ckpt.adam_visual.step = 17;
    ckpt.steps_taken = 17;

    const std::string path = "/tmp/acc_test_ckpt.bin";
    save_checkpoint(ckpt, path);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(bundles_equal(loaded.bundle, ckpt.bundle));
    CHECK(loaded.adam_visual.step == 17);
    CHECK(loaded.steps_taken == 17);
    CHECK(loaded.adam_visual.first_moment.layers[0].weight.data ==
          ckpt.adam_visual.first_moment.layers[0].weight.data);

    // Saving the loaded copy reproduces the file byte for byte.
    const std::string path2 = "/tmp/acc_test_ckpt2.bin";
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}
