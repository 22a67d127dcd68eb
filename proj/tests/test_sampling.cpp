#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include "acc/eval.hpp"
#include "acc/sampling.hpp"
#include "acc/training.hpp"

using namespace acc;

namespace {

Matrix rows_from(std::initializer_list<Vec> rows) {
    const Vec first = *rows.begin();
    Matrix m(rows.size(), first.size());
    std::size_t r = 0;
    for (const Vec& v : rows) m.set_row(r++, v);
    return m;
}

// Queries realized by an actual final layer so the caches are genuine.
struct QuerySetup {
    MlpParams net;  // single affine layer: z (dprime) -> raw (d)
    Matrix queries;
    std::vector<ForwardCache> caches;
};

QuerySetup make_queries(std::size_t d, std::size_t dprime, std::size_t M, Rng& rng) {
    QuerySetup setup;
    setup.net = make_mlp({dprime, d}, InitScheme::fan_in_uniform, rng);
    setup.queries = Matrix(M, d);
    setup.caches.resize(M);
    for (std::size_t j = 0; j < M; ++j) {
        Vec z(dprime);
        for (double& v : z) v = rng.next_normal();
        const Vec raw = mlp_forward(setup.net, z, &setup.caches[j]);
        setup.queries.set_row(j, l2_normalize(raw));
    }
    return setup;
}

Vec random_unit(std::size_t d, Rng& rng) {
    Vec v(d);
    for (double& x : v) x = rng.next_normal();
    return l2_normalize(v);
}

Matrix flatten_outer(const GradientEmbedding& g) {
    Matrix m(g.key_factor.size(), g.activation_factor.size());
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            m.at(r, c) = g.key_factor[r] * g.activation_factor[c];
        }
    }
    return m;
}

CandidatePool pool_from(const Matrix& embeddings, std::int64_t first_id = 0) {
    CandidatePool pool;
    pool.embeddings = embeddings;
    for (std::size_t i = 0; i < embeddings.rows; ++i) {
        pool.ids.push_back(first_id + static_cast<std::int64_t>(i));
    }
    return pool;
}

KeyDictionary dict_with_ids(std::initializer_list<std::int64_t> ids) {
    KeyDictionary dict(ids.size() == 0 ? 1 : ids.size());
    for (std::int64_t id : ids) {
        KeyEntry e;
        e.sample_id = id;
        e.embedding = {1.0, 0.0};
        dict.seed_entry(std::move(e));
    }
    return dict;
}

}  // namespace

TEST_CASE("pseudo_posterior: single query, orthogonality, direct oracle") {
    const PseudoLabelResult single = pseudo_posterior({1.0, 0.0}, rows_from({{0.0, 1.0}}));
    CHECK(single.posterior == Vec{1.0});
    CHECK(single.pseudo_label == 0);

    // Candidate orthogonal to every query: uniform posterior, tie to index 0.
    const PseudoLabelResult ortho =
        pseudo_posterior({0.0, 0.0, 1.0},
                         rows_from({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {-1.0, 0.0, 0.0}}));
    for (double p : ortho.posterior) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(ortho.pseudo_label == 0);

    // k=(1,0) against queries (1,0) and (0,1): softmax([1, 0]).
    const PseudoLabelResult two =
        pseudo_posterior({1.0, 0.0}, rows_from({{1.0, 0.0}, {0.0, 1.0}}));
    const double e1 = std::exp(1.0);
    CHECK(two.posterior[0] == doctest::Approx(e1 / (e1 + 1.0)).epsilon(1e-14));
    CHECK(two.posterior[1] == doctest::Approx(1.0 / (e1 + 1.0)).epsilon(1e-14));
    CHECK(two.pseudo_label == 0);

    CHECK_THROWS_AS(pseudo_posterior({1.0}, Matrix(0, 1)), std::invalid_argument);
    CHECK_THROWS_AS(pseudo_posterior({1.0, 0.0}, rows_from({{1.0, 0.0, 0.0}})), ShapeError);
}

TEST_CASE("pseudo_posterior: invariant to a constant shift of all logits") {
    Rng rng(71);
    const Vec key = random_unit(4, rng);
    Matrix queries(3, 4);
    for (std::size_t j = 0; j < 3; ++j) queries.set_row(j, random_unit(4, rng));
    // Adding c*key to every query shifts every logit by the same constant.
    Matrix shifted = queries;
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t d = 0; d < 4; ++d) shifted.at(j, d) += 2.5 * key[d];
    }
    const PseudoLabelResult a = pseudo_posterior(key, queries);
    const PseudoLabelResult b = pseudo_posterior(key, shifted);
    CHECK(a.pseudo_label == b.pseudo_label);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(a.posterior[j] == doctest::Approx(b.posterior[j]).epsilon(1e-12));
    }
}

TEST_CASE("gradient_embedding: confident posteriors give the zero embedding") {
    Rng rng(72);
    // M=1 forces a one-hot posterior.
    QuerySetup setup = make_queries(3, 4, 1, rng);
    const GradientEmbedding g = gradient_embedding(random_unit(3, rng), setup.queries,
                                                   setup.caches);
    CHECK(g.is_zero());
    for (double w : g.activation_factor) CHECK(w == 0.0);

    // Huge logit gaps underflow to an exactly one-hot posterior.
    QuerySetup big = make_queries(2, 2, 3, rng);
    for (std::size_t j = 0; j < 3; ++j) {
        big.caches[j].preacts.back() = (j == 1) ? Vec{5000.0, 0.0} : Vec{-5000.0, 0.0};
    }
    const GradientEmbedding g2 = gradient_embedding({1.0, 0.0}, big.queries, big.caches);
    CHECK(g2.is_zero());
}

TEST_CASE("gradient_embedding: factored form equals finite differences") {
    Rng rng(73);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 2 + rng.next_below(4);
        const std::size_t dprime = 2 + rng.next_below(3);
        const std::size_t M = 2 + rng.next_below(3);
        QuerySetup setup = make_queries(d, dprime, M, rng);
        const Vec key = random_unit(d, rng);
        const GradientEmbedding g = gradient_embedding(key, setup.queries, setup.caches);

        Vec logits(M);
        for (std::size_t j = 0; j < M; ++j) logits[j] = dot(key, setup.caches[j].output());
        const std::size_t label = argmax(softmax(logits, 1.0));

        const Matrix analytic = flatten_outer(g);
        const double h = 1e-6;
        double worst = 0.0, scale_ref = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t c = 0; c < dprime; ++c) {
                auto loss_at = [&](double delta) {
                    MlpParams net = setup.net;
                    net.layers[0].weight.at(r, c) += delta;
                    Vec l(M);
                    for (std::size_t j = 0; j < M; ++j) {
                        l[j] = dot(key, mlp_apply(net, setup.caches[j].inputs[0]));
                    }
                    return cross_entropy(softmax(l, 1.0), label);
                };
                const double fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - analytic.at(r, c)));
                scale_ref = std::max(scale_ref, std::abs(fd));
            }
        }
        CHECK(worst <= std::max(scale_ref, 1e-3) * 1e-6);
    }

    // Cache/batch mismatch is a shape error.
    QuerySetup setup = make_queries(3, 3, 2, rng);
    std::vector<ForwardCache> short_caches = {setup.caches[0]};
    CHECK_THROWS_AS(gradient_embedding(random_unit(3, rng), setup.queries, short_caches),
                    ShapeError);
}

TEST_CASE("grad_distance_sq: identities and the explicit flattening oracle") {
    Rng rng(74);
    GradientEmbedding a;
    a.key_factor = {1.0, -2.0};
    a.activation_factor = {0.5, 0.25, -1.0};
    CHECK(grad_distance_sq(a, a) == doctest::Approx(0.0));

    GradientEmbedding zero;
    zero.key_factor = {0.0, 0.0};
    zero.activation_factor = {0.0, 0.0, 0.0};
    CHECK(grad_distance_sq(a, zero) ==
          doctest::Approx(norm_sq(a.key_factor) * norm_sq(a.activation_factor)).epsilon(1e-14));

    for (int trial = 0; trial < 25; ++trial) {
        GradientEmbedding x, y;
        x.key_factor.resize(4);
        x.activation_factor.resize(5);
        y.key_factor.resize(4);
        y.activation_factor.resize(5);
        for (double& v : x.key_factor) v = rng.next_normal();
        for (double& v : x.activation_factor) v = rng.next_normal();
        for (double& v : y.key_factor) v = rng.next_normal();
        for (double& v : y.activation_factor) v = rng.next_normal();

        const Matrix fx = flatten_outer(x);
        const Matrix fy = flatten_outer(y);
        double explicit_dist = 0.0;
        for (std::size_t i = 0; i < fx.data.size(); ++i) {
            const double diff = fx.data[i] - fy.data[i];
            explicit_dist += diff * diff;
        }
        CHECK(std::abs(grad_distance_sq(x, y) - explicit_dist) < 1e-10);
    }

    GradientEmbedding bad;
    bad.key_factor = {1.0};
    bad.activation_factor = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(grad_distance_sq(a, bad), ShapeError);
}

TEST_CASE("kmeanspp_seed: boundary cases and distinctness") {
    Rng rng(75);
    Matrix points(6, 2);
    for (std::size_t i = 0; i < 6; ++i) points.set_row(i, {double(i), double(i % 3)});

    const std::vector<std::size_t> all = kmeanspp_seed(points, 6, rng);
    std::set<std::size_t> unique(all.begin(), all.end());
    CHECK(unique.size() == 6);

    CHECK_THROWS_AS(kmeanspp_seed(points, 7, rng), CapacityError);

    Matrix identical(4, 2);
    for (std::size_t i = 0; i < 4; ++i) identical.set_row(i, {1.0, 1.0});
    CHECK_THROWS_AS(kmeanspp_seed(identical, 2, rng), DegenerateInputError);
    CHECK(kmeanspp_seed(identical, 1, rng).size() == 1);

    // Duplicates are never chosen while spread-out points remain.
    Matrix dups(5, 1);
    dups.at(0, 0) = 0.0;
    dups.at(1, 0) = 0.0;
    dups.at(2, 0) = 1.0;
    dups.at(3, 0) = 1.0;
    dups.at(4, 0) = 2.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<std::size_t> picks = kmeanspp_seed(dups, 3, rng);
        std::set<double> values;
        for (std::size_t p : picks) values.insert(dups.at(p, 0));
        CHECK(values.size() == 3);  // one of each value, never two duplicates
    }
}

TEST_CASE("kmeanspp_seed: three-point line masses and uniform first seed") {
    Matrix points(3, 1);
    points.at(0, 0) = 0.0;
    points.at(1, 0) = 1.0;
    points.at(2, 0) = 10.0;

    // Conditioned on the first seed being point 0, the second is point 2
    // with probability 100/101.
    Rng rng(76);
    std::size_t conditioned = 0, far = 0;
    while (conditioned < 30000) {
        const std::vector<std::size_t> seeds = kmeanspp_seed(points, 2, rng);
        if (seeds[0] != 0) continue;
        ++conditioned;
        if (seeds[1] == 2) ++far;
    }
    const double n = static_cast<double>(conditioned);
    const double expect_far = n * 100.0 / 101.0;
    const double expect_near = n * 1.0 / 101.0;
    const double obs_far = static_cast<double>(far);
    const double obs_near = n - obs_far;
    const double chi2 = (obs_far - expect_far) * (obs_far - expect_far) / expect_far +
                        (obs_near - expect_near) * (obs_near - expect_near) / expect_near;
    CHECK(chi2 < 6.635);  // alpha = 0.01, df = 1

    // num_seeds=1 is uniform over the population.
    Rng rng2(77);
    std::array<std::size_t, 3> counts{0, 0, 0};
    const std::size_t trials = 30000;
    for (std::size_t t = 0; t < trials; ++t) {
        counts[kmeanspp_seed(points, 1, rng2)[0]] += 1;
    }
    double chi2_uniform = 0.0;
    for (std::size_t c : counts) {
        const double expect = trials / 3.0;
        chi2_uniform += (c - expect) * (c - expect) / expect;
    }
    CHECK(chi2_uniform < 9.21);  // alpha = 0.01, df = 2
}

TEST_CASE("active_select: exact-fit pool, dictionary exclusion, degenerate fallback") {
    Rng rng(78);
    QuerySetup setup = make_queries(3, 4, 4, rng);

    Matrix keys(6, 3);
    for (std::size_t i = 0; i < 6; ++i) keys.set_row(i, random_unit(3, rng));
    const CandidatePool pool = pool_from(keys);
    const KeyDictionary dict = dict_with_ids({1, 4});

    // Exactly M candidates outside the dictionary: all of them come back.
    const std::vector<std::int64_t> all =
        active_select(pool, dict, setup.queries, setup.caches, 4, rng);
    CHECK(std::set<std::int64_t>(all.begin(), all.end()) ==
          std::set<std::int64_t>{0, 2, 3, 5});

    // Selected ids never include dictionary members.
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<std::int64_t> picks =
            active_select(pool, dict, setup.queries, setup.caches, 2, rng);
        for (std::int64_t id : picks) {
            CHECK(id != 1);
            CHECK(id != 4);
        }
    }

    CHECK_THROWS_AS(active_select(pool, dict, setup.queries, setup.caches, 5, rng),
                    CapacityError);

    // All candidates confidently predicted -> all-zero gradients -> uniform
    // fallback still returns M distinct valid ids.
    QuerySetup confident = make_queries(2, 2, 3, rng);
    for (std::size_t j = 0; j < 3; ++j) {
        confident.caches[j].preacts.back() = (j == 0) ? Vec{9000.0, 0.0} : Vec{-9000.0, 0.0};
    }
    Matrix ckeys(5, 2);
    for (std::size_t i = 0; i < 5; ++i) ckeys.set_row(i, {1.0, 0.0});
    const CandidatePool cpool = pool_from(ckeys, 10);
    const std::vector<std::int64_t> fallback =
        active_select(cpool, dict_with_ids({99}), confident.queries, confident.caches, 3, rng);
    CHECK(fallback.size() == 3);
    CHECK(std::set<std::int64_t>(fallback.begin(), fallback.end()).size() == 3);
    for (std::int64_t id : fallback) CHECK((id >= 10 && id < 15));
}

TEST_CASE("feature_select: spreads over embedding values, skips duplicates") {
    Rng rng(79);
    Matrix keys(6, 2);
    keys.set_row(0, {1.0, 0.0});
    keys.set_row(1, {1.0, 0.0});
    keys.set_row(2, {0.0, 1.0});
    keys.set_row(3, {0.0, 1.0});
    keys.set_row(4, {-1.0, 0.0});
    keys.set_row(5, {-1.0, 0.0});
    const CandidatePool pool = pool_from(keys);
    const KeyDictionary dict = dict_with_ids({});
    for (int trial = 0; trial < 30; ++trial) {
        const std::vector<std::int64_t> picks = feature_select(pool, dict, 3, rng);
        std::set<Vec> distinct;
        for (std::int64_t id : picks) distinct.insert(keys.row_vec(static_cast<std::size_t>(id)));
        CHECK(distinct.size() == 3);
    }
}

TEST_CASE("random_select: pool-exact, reproducible, uniform") {
    Rng rng(80);
    Matrix keys(8, 2);
    for (std::size_t i = 0; i < 8; ++i) keys.set_row(i, random_unit(2, rng));
    const CandidatePool pool = pool_from(keys);
    const KeyDictionary dict = dict_with_ids({0, 1, 2, 3});

    const std::vector<std::int64_t> all = random_select(pool, dict, 4, rng);
    CHECK(std::set<std::int64_t>(all.begin(), all.end()) ==
          std::set<std::int64_t>{4, 5, 6, 7});

    Rng seeded_a(81), seeded_b(81);
    CHECK(random_select(pool, dict, 2, seeded_a) == random_select(pool, dict, 2, seeded_b));

    // Frequency over trials is uniform across the four candidates.
    Rng freq_rng(82);
    std::map<std::int64_t, std::size_t> counts;
    const std::size_t trials = 40000;
    for (std::size_t t = 0; t < trials; ++t) {
        counts[random_select(pool, dict, 1, freq_rng)[0]] += 1;
    }
    double chi2 = 0.0;
    for (const auto& [id, c] : counts) {
        const double expect = trials / 4.0;
        chi2 += (c - expect) * (c - expect) / expect;
    }
    CHECK(chi2 < 11.345);  // alpha = 0.01, df = 3
}

TEST_CASE("ohem_select: loss ordering with deterministic ties") {
    Rng rng(83);
    // Queries along axes; candidates chosen so pseudo-label losses are known.
    const Matrix queries = rows_from({{1.0, 0.0}, {0.0, 1.0}});

    Matrix keys(4, 2);
    keys.set_row(0, l2_normalize({1.0, 1.0}));   // equidistant: loss ln 2 (max)
    keys.set_row(1, {1.0, 0.0});                 // confident: low loss
    keys.set_row(2, {0.0, 1.0});                 // same low loss as id 1
    keys.set_row(3, l2_normalize({2.0, 1.0}));   // in between
    const CandidatePool pool = pool_from(keys);
    const KeyDictionary dict = dict_with_ids({});

    const std::vector<std::int64_t> top1 = ohem_select(pool, dict, queries, 1);
    CHECK(top1 == std::vector<std::int64_t>{0});

    // Ranking matches an explicit loss recomputation.
    std::vector<std::pair<double, std::int64_t>> oracle;
    for (std::size_t i = 0; i < 4; ++i) {
        const PseudoLabelResult r = pseudo_posterior(keys.row_vec(i), queries);
        oracle.push_back({cross_entropy(r.posterior, r.pseudo_label),
                          static_cast<std::int64_t>(i)});
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const std::vector<std::int64_t> ranked = ohem_select(pool, dict, queries, 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(ranked[i] == oracle[i].second);

    // Ties (ids 1 and 2 by symmetry) resolve to the lowest id.
    const std::vector<std::int64_t> top3 = ohem_select(pool, dict, queries, 3);
    CHECK(top3[0] == 0);

    // The uniform posterior attains the ln(M) maximum.
    const PseudoLabelResult uniform = pseudo_posterior(keys.row_vec(0), queries);
    CHECK(cross_entropy(uniform.posterior, uniform.pseudo_label) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // Dictionary members are excluded.
    const std::vector<std::int64_t> excl =
        ohem_select(pool, dict_with_ids({0}), queries, 3);
    for (std::int64_t id : excl) CHECK(id != 0);

    CHECK_THROWS_AS(ohem_select(pool, dict_with_ids({0}), queries, 4), CapacityError);
}

TEST_CASE("active_select spans at least as many categories as random on trained encoders") {
    // Small end-to-end instance: train briefly so the key space clusters by
    // category, then compare the two samplers on a frozen pool.
    MiSpec spec;
    spec.alphabet_sizes = {8};
    spec.slot_dim = 8;
    spec.noise_sigma = 0.1;
    spec.dataset_size = 512;
    spec.seed = 84;
    const PairedDataset ds = generate(spec);

    TrainConfig config;
    config.M = 16;
    config.K = 32;
    config.N = 128;
    config.m = 0.9;
    config.lr = 2e-3;
    config.warmup_steps = 20;
    config.epochs = 6;
    config.seed = 85;
    config.hidden_dim = 32;
    config.embed_dim = 16;
    config.sampler = SamplerKind::random;
    const RunResult trained = run(config, ds);

    std::vector<std::size_t> batch(config.M);
    for (std::size_t i = 0; i < config.M; ++i) batch[i] = i;
    const MiniBatch mb = minibatch(ds, batch);
    const BatchEncoding queries = encode_query(trained.bundle, Modality::audio, mb.audio);

    // Build a frozen candidate pool directly for a clean comparison.
    Rng pool_rng(86);
    CandidatePool pool;
    const std::vector<std::size_t> picks =
        pool_rng.sample_without_replacement(ds.size(), config.N);
    Matrix inputs(config.N, ds.visual.cols);
    for (std::size_t i = 0; i < config.N; ++i) inputs.set_row(i, ds.visual.row_vec(picks[i]));
    pool.embeddings = encode_key(trained.bundle, Modality::visual, inputs);
    for (std::size_t p : picks) pool.ids.push_back(static_cast<std::int64_t>(p));
    const KeyDictionary empty_dict = dict_with_ids({});

    Rng select_rng(87);
    double active_total = 0.0, random_total = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto act =
            active_select(pool, empty_dict, queries.embeddings, queries.caches, 16, select_rng);
        const auto rnd = random_select(pool, empty_dict, 16, select_rng);
        active_total += static_cast<double>(unique_category_count(act, ds.labels));
        random_total += static_cast<double>(unique_category_count(rnd, ds.labels));
    }
    CHECK(active_total >= random_total);
}

TEST_CASE("gradient_embeddings: parallel kernel equals the serial reference") {
    Rng rng(88);
    QuerySetup setup = make_queries(4, 5, 6, rng);
    Matrix keys(40, 4);
    for (std::size_t i = 0; i < 40; ++i) keys.set_row(i, random_unit(4, rng));
    std::vector<std::size_t> rows(40);
    for (std::size_t i = 0; i < 40; ++i) rows[i] = i;

    set_thread_count(2);
    const auto parallel = gradient_embeddings(keys, rows, setup.queries, setup.caches);
    set_thread_count(0);
    const auto serial = gradient_embeddings_serial(keys, rows, setup.queries, setup.caches);
    REQUIRE(parallel.size() == serial.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(parallel[i].key_factor == serial[i].key_factor);
        CHECK(parallel[i].activation_factor == serial[i].activation_factor);
    }
}
