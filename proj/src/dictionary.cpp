#include "acc/dictionary.hpp"

namespace acc {

void KeyDictionary::enqueue_dequeue(const std::vector<KeyEntry>& new_entries) {
    if (new_entries.size() > capacity_) {
        throw CapacityError("enqueue_dequeue: batch larger than dictionary capacity");
    }
    for (std::size_t i = 0; i < new_entries.size(); ++i) entries_.pop_front();
    for (const KeyEntry& e : new_entries) {
        KeyEntry stamped = e;
        stamped.age = next_age_++;
        entries_.push_back(std::move(stamped));
    }
}

DictSnapshot KeyDictionary::snapshot() const {
    DictSnapshot snap;
    snap.ids.reserve(entries_.size());
    const std::size_t dim = entries_.empty() ? 0 : entries_.front().embedding.size();
    snap.embeddings = Matrix(entries_.size(), dim);
    std::size_t row = 0;
    for (const KeyEntry& e : entries_) {
        snap.embeddings.set_row(row, e.embedding);
        snap.ids.push_back(e.sample_id);
        ++row;
    }
    return snap;
}

std::unordered_set<std::int64_t> KeyDictionary::id_set() const {
    std::unordered_set<std::int64_t> ids;
    ids.reserve(entries_.size() * 2);
    for (const KeyEntry& e : entries_) ids.insert(e.sample_id);
    return ids;
}

void KeyDictionary::seed_entry(KeyEntry entry) {
    if (entries_.size() >= capacity_) {
        throw CapacityError("seed_entry: dictionary already full");
    }
    entry.age = next_age_++;
    entries_.push_back(std::move(entry));
}

KeyDictionary init_dictionary(const PairedDataset& dataset, Modality modality,
                              const EncoderBundle& bundle, std::size_t K, Rng& rng) {
    if (K > dataset.size()) {
        throw CapacityError("init_dictionary: K exceeds dataset size");
    }
    const std::vector<std::size_t> picks = rng.sample_without_replacement(dataset.size(), K);
    Matrix inputs(K, dataset.inputs(modality).cols);
    for (std::size_t i = 0; i < K; ++i) {
        inputs.set_row(i, dataset.inputs(modality).row_vec(picks[i]));
    }
    const Matrix keys = encode_key(bundle, modality, inputs);
    KeyDictionary dict(K);
    for (std::size_t i = 0; i < K; ++i) {
        KeyEntry entry;
        entry.sample_id = static_cast<std::int64_t>(picks[i]);
        entry.embedding = keys.row_vec(i);
        dict.seed_entry(std::move(entry));
    }
    return dict;
}

}  // namespace acc
