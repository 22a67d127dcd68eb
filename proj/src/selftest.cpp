#include "acc/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <vector>

#include "acc/data.hpp"
#include "acc/dictionary.hpp"
#include "acc/sampling.hpp"
#include "acc/training.hpp"

namespace acc {

namespace {

bool softmax_invariants() {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Vec logits(5);
        for (double& l : logits) l = rng.next_normal() * 3.0;
        const Vec p = softmax(logits, 0.7);
        double total = 0.0;
        for (double x : p) {
            if (x < 0.0) return false;
            total += x;
        }
        if (std::abs(total - 1.0) > 1e-12) return false;
        Vec shifted = logits;
        for (double& l : shifted) l += 4.2;
        const Vec q = softmax(shifted, 0.7);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (std::abs(p[i] - q[i]) > 1e-12) return false;
        }
    }
    return true;
}

bool queue_fifo_law() {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t K = 2 + rng.next_below(16);
        KeyDictionary dict(K);
        std::deque<std::int64_t> reference;
        std::int64_t next_id = 0;
        for (std::size_t i = 0; i < K; ++i) {
            KeyEntry e;
            e.sample_id = next_id++;
            e.embedding = {1.0};
            dict.seed_entry(std::move(e));
            reference.push_back(next_id - 1);
        }
        for (int op = 0; op < 40; ++op) {
            const std::size_t batch = 1 + rng.next_below(K);
            std::vector<KeyEntry> incoming(batch);
            for (KeyEntry& e : incoming) {
                e.sample_id = next_id++;
                e.embedding = {1.0};
                reference.pop_front();
                reference.push_back(e.sample_id);
            }
            dict.enqueue_dequeue(incoming);
            const DictSnapshot snap = dict.snapshot();
            if (snap.ids.size() != K) return false;
            for (std::size_t i = 0; i < K; ++i) {
                if (snap.ids[i] != reference[i]) return false;
            }
        }
    }
    return true;
}

bool kmeanspp_three_point_masses() {
    // Points on a line at 0, 1, 10; conditioned on the first seed being the
    // origin, the second seed lands on 10 with probability 100/101.
    Matrix points(3, 1);
    points.at(0, 0) = 0.0;
    points.at(1, 0) = 1.0;
    points.at(2, 0) = 10.0;
    Rng rng(13);
    std::size_t conditioned = 0, picked_far = 0;
    while (conditioned < 20000) {
        const std::vector<std::size_t> seeds = kmeanspp_seed(points, 2, rng);
        if (seeds[0] != 0) continue;
        ++conditioned;
        if (seeds[1] == 2) ++picked_far;
    }
    const double expect_far = 20000.0 * 100.0 / 101.0;
    const double expect_near = 20000.0 / 101.0;
    const double obs_far = static_cast<double>(picked_far);
    const double obs_near = static_cast<double>(conditioned - picked_far);
    const double chi2 = (obs_far - expect_far) * (obs_far - expect_far) / expect_far +
                        (obs_near - expect_near) * (obs_near - expect_near) / expect_near;
    return chi2 < 6.635;  // df=1, alpha=0.01
}

bool momentum_exactness() {
    Rng rng(14);
    BundleConfig bc;
    bc.visual_input_dim = 4;
    bc.audio_input_dim = 4;
    bc.hidden_dim = 6;
    bc.embed_dim = 3;
    EncoderBundle bundle = make_bundle(bc, rng);
    for (double& w : bundle.visual.query_params.layers[0].weight.data) w += 0.5;

    EncoderBundle frozen = bundle;
    frozen.momentum = 1.0;
    momentum_update(frozen, Modality::visual);
    if (frozen.visual.key_params.layers[0].weight.data !=
        bundle.visual.key_params.layers[0].weight.data) {
        return false;
    }

    EncoderBundle copied = bundle;
    copied.momentum = 0.0;
    momentum_update(copied, Modality::visual);
    return copied.visual.key_params.layers[0].weight.data ==
           copied.visual.query_params.layers[0].weight.data;
}

bool gradient_embedding_fd() {
    Rng rng(15);
    const std::size_t d = 4, dprime = 3, M = 3;
    MlpParams net = make_mlp({dprime, d}, InitScheme::fan_in_uniform, rng);
    Matrix queries(M, d);
    std::vector<ForwardCache> caches(M);
    for (std::size_t j = 0; j < M; ++j) {
        Vec z(dprime);
        for (double& v : z) v = rng.next_normal();
        const Vec raw = mlp_forward(net, z, &caches[j]);
        queries.set_row(j, l2_normalize(raw));
    }
    Vec key(d);
    for (double& v : key) v = rng.next_normal();
    key = l2_normalize(key);

    const GradientEmbedding g = gradient_embedding(key, queries, caches);

    // Independent recomputation: perturb each final-layer weight and take a
    // central difference of the pseudo-label cross-entropy.
    Vec logits(M);
    for (std::size_t j = 0; j < M; ++j) logits[j] = dot(key, caches[j].output());
    const std::size_t label = argmax(softmax(logits, 1.0));

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < dprime; ++c) {
            auto loss_at = [&](double delta) {
                MlpParams perturbed = net;
                perturbed.layers[0].weight.at(r, c) += delta;
                Vec l(M);
                for (std::size_t j = 0; j < M; ++j) {
                    l[j] = dot(key, mlp_apply(perturbed, caches[j].inputs[0]));
                }
                return cross_entropy(softmax(l, 1.0), label);
            };
            const double fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            const double analytic = g.key_factor[r] * g.activation_factor[c];
            worst = std::max(worst, std::abs(fd - analytic));
        }
    }
    return worst < 1e-6;
}

bool training_determinism() {
    MiSpec spec;
    spec.alphabet_sizes = {5};
    spec.dataset_size = 64;
    spec.seed = 3;
    const PairedDataset dataset = generate(spec);
    TrainConfig config;
    config.M = 4;
    config.K = 8;
    config.N = 16;
    config.m = 0.9;
    config.warmup_steps = 5;
    config.epochs = 2;
    config.seed = 9;
    config.hidden_dim = 8;
    config.embed_dim = 4;
    const RunResult a = run(config, dataset);
    const RunResult b = run(config, dataset);
    if (a.history.size() != b.history.size()) return false;
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        if (a.history[i].loss_v2a != b.history[i].loss_v2a) return false;
        if (a.history[i].loss_a2v != b.history[i].loss_a2v) return false;
    }
    return true;
}

}  // namespace

int run_selftest() {
    struct Suite {
        const char* name;
        std::function<bool()> fn;
    };
    const std::vector<Suite> suites = {
        {"softmax invariants", softmax_invariants},
        {"queue fifo law", queue_fifo_law},
        {"kmeans++ three-point masses", kmeanspp_three_point_masses},
        {"momentum exactness", momentum_exactness},
        {"gradient embedding vs finite differences", gradient_embedding_fd},
        {"training determinism", training_determinism},
    };
    int failures = 0;
    for (const Suite& suite : suites) {
        bool ok = false;
        try {
            ok = suite.fn();
        } catch (const std::exception& e) {
            std::printf("selftest %s: FAIL (%s)\n", suite.name, e.what());
            ++failures;
            continue;
        }
        std::printf("selftest %s: %s\n", suite.name, ok ? "PASS" : "FAIL");
        if (!ok) ++failures;
    }
    return failures;
}

}  // namespace acc
