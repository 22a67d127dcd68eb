#pragma once

#include <cstdint>
#include <deque>
#include <unordered_set>
#include <vector>

#include "acc/data.hpp"
#include "acc/encoders.hpp"
#include "acc/numerics.hpp"

namespace acc {

struct KeyEntry {
    std::int64_t sample_id = -1;
    Vec embedding;
    std::int64_t age = 0;  // enqueue step counter
};

// Read-only view of the queue contents taken once per training step.
struct DictSnapshot {
    Matrix embeddings;  // capacity x embed_dim, oldest first
    std::vector<std::int64_t> ids;
};

// Fixed-capacity FIFO of negative keys. Embeddings are frozen at enqueue
// time; staleness relative to the current key encoder is intentional.
class KeyDictionary {
public:
    KeyDictionary() = default;
    explicit KeyDictionary(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    const std::deque<KeyEntry>& entries() const { return entries_; }

    // Drops the |new_entries| oldest entries and appends the new ones.
    // Throws CapacityError when more entries arrive than the queue holds.
    void enqueue_dequeue(const std::vector<KeyEntry>& new_entries);

    DictSnapshot snapshot() const;
    std::unordered_set<std::int64_t> id_set() const;

    // Used only by initialization; fills up to capacity.
    void seed_entry(KeyEntry entry);

private:
    std::size_t capacity_ = 0;
    std::deque<KeyEntry> entries_;
    std::int64_t next_age_ = 0;
};

// K distinct random samples encoded by the current key encoder of the given
// modality. Throws CapacityError when K exceeds the dataset size.
KeyDictionary init_dictionary(const PairedDataset& dataset, Modality modality,
                              const EncoderBundle& bundle, std::size_t K, Rng& rng);

}  // namespace acc
