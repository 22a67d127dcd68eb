#include <doctest.h>

#include <algorithm>
#include <deque>
#include <set>

#include "acc/dictionary.hpp"

using namespace acc;

namespace {

PairedDataset tiny_dataset(std::size_t n, std::uint64_t seed = 5) {
    MiSpec spec;
    spec.alphabet_sizes = {4};
    spec.slot_dim = 4;
    spec.dataset_size = n;
    spec.seed = seed;
    return generate(spec);
}

EncoderBundle tiny_bundle(const PairedDataset& ds, std::uint64_t seed = 51) {
    Rng rng(seed);
    BundleConfig bc;
    bc.visual_input_dim = ds.visual.cols;
    bc.audio_input_dim = ds.audio.cols;
    bc.hidden_dim = 5;
    bc.embed_dim = 3;
    return make_bundle(bc, rng);
}

std::vector<KeyEntry> entries_with_ids(std::initializer_list<std::int64_t> ids) {
    std::vector<KeyEntry> out;
    for (std::int64_t id : ids) {
        KeyEntry e;
        e.sample_id = id;
        e.embedding = {1.0, 0.0};
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

TEST_CASE("init_dictionary: K equals dataset size covers every sample once") {
    const PairedDataset ds = tiny_dataset(12);
    const EncoderBundle bundle = tiny_bundle(ds);
    Rng rng(52);
    const KeyDictionary dict = init_dictionary(ds, Modality::visual, bundle, 12, rng);
    std::set<std::int64_t> ids;
    for (const KeyEntry& e : dict.entries()) ids.insert(e.sample_id);
    CHECK(ids.size() == 12);
    CHECK(*ids.begin() == 0);
    CHECK(*ids.rbegin() == 11);
}

TEST_CASE("init_dictionary: seeded draws are reproducible and distinct") {
    const PairedDataset ds = tiny_dataset(40);
    const EncoderBundle bundle = tiny_bundle(ds);
    Rng rng_a(53), rng_b(53);
    const KeyDictionary a = init_dictionary(ds, Modality::audio, bundle, 16, rng_a);
    const KeyDictionary b = init_dictionary(ds, Modality::audio, bundle, 16, rng_b);
    const DictSnapshot sa = a.snapshot();
    const DictSnapshot sb = b.snapshot();
    CHECK(sa.ids == sb.ids);
    CHECK(sa.embeddings.data == sb.embeddings.data);
    std::set<std::int64_t> distinct(sa.ids.begin(), sa.ids.end());
    CHECK(distinct.size() == 16);

    Rng rng_c(54);
    CHECK_THROWS_AS(init_dictionary(ds, Modality::visual, bundle, 41, rng_c), CapacityError);
}

TEST_CASE("enqueue_dequeue: FIFO semantics forced by examples") {
    KeyDictionary dict(4);
    for (const KeyEntry& e : entries_with_ids({10, 11, 12, 13})) {
        KeyEntry copy = e;
        dict.seed_entry(std::move(copy));
    }

    // [a,b,c,d] + [e,f] -> [c,d,e,f]
    dict.enqueue_dequeue(entries_with_ids({14, 15}));
    CHECK(dict.snapshot().ids == std::vector<std::int64_t>{12, 13, 14, 15});
    CHECK(dict.size() == 4);

    // Full replacement at M=K.
    dict.enqueue_dequeue(entries_with_ids({20, 21, 22, 23}));
    CHECK(dict.snapshot().ids == std::vector<std::int64_t>{20, 21, 22, 23});

    // M=1 repeated K times cycles everything out in order.
    for (std::int64_t id : {30, 31, 32, 33}) dict.enqueue_dequeue(entries_with_ids({id}));
    CHECK(dict.snapshot().ids == std::vector<std::int64_t>{30, 31, 32, 33});

    CHECK_THROWS_AS(dict.enqueue_dequeue(entries_with_ids({1, 2, 3, 4, 5})), CapacityError);
}

TEST_CASE("enqueue_dequeue: property test against a reference queue") {
    Rng rng(55);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t K = 1 + rng.next_below(12);
        KeyDictionary dict(K);
        std::deque<std::int64_t> reference;
        std::int64_t next = 100;
        for (std::size_t i = 0; i < K; ++i) {
            KeyEntry e;
            e.sample_id = next++;
            e.embedding = {0.5};
            dict.seed_entry(std::move(e));
            reference.push_back(next - 1);
        }
        for (int op = 0; op < 25; ++op) {
            const std::size_t batch = 1 + rng.next_below(K);
            std::vector<KeyEntry> incoming;
            for (std::size_t i = 0; i < batch; ++i) {
                KeyEntry e;
                e.sample_id = next++;
                e.embedding = {0.5};
                incoming.push_back(std::move(e));
                reference.pop_front();
                reference.push_back(next - 1);
            }
            dict.enqueue_dequeue(incoming);
            REQUIRE(dict.size() == K);
            const DictSnapshot snap = dict.snapshot();
            for (std::size_t i = 0; i < K; ++i) REQUIRE(snap.ids[i] == reference[i]);
        }
    }
}

TEST_CASE("snapshot: aligned ids and rows, new entries land at the tail") {
    const PairedDataset ds = tiny_dataset(20);
    const EncoderBundle bundle = tiny_bundle(ds);
    Rng rng(56);
    KeyDictionary dict = init_dictionary(ds, Modality::visual, bundle, 6, rng);
    const DictSnapshot before = dict.snapshot();
    CHECK(before.embeddings.rows == 6);
    CHECK(before.ids.size() == 6);
    std::size_t row = 0;
    for (const KeyEntry& e : dict.entries()) {
        CHECK(before.ids[row] == e.sample_id);
        CHECK(before.embeddings.row_vec(row) == e.embedding);
        ++row;
    }

    std::vector<KeyEntry> fresh = entries_with_ids({101, 102});
    fresh[0].embedding = {0.0, 1.0, 0.0};
    fresh[1].embedding = {0.0, 0.0, 1.0};
    dict.enqueue_dequeue(fresh);
    const DictSnapshot after = dict.snapshot();
    CHECK(after.ids[4] == 101);
    CHECK(after.ids[5] == 102);
    CHECK(after.embeddings.row_vec(5) == Vec{0.0, 0.0, 1.0});

    // Stored embeddings are frozen at enqueue time: the snapshot rows equal
    // the entries byte for byte even though the encoder has since moved on.
    CHECK(after.embeddings.row_vec(4) == Vec{0.0, 1.0, 0.0});
}
