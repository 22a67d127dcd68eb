#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acc/encoders.hpp"
#include "acc/numerics.hpp"

namespace acc {

// Generator spec for paired two-modality data with controllable mutual
// information. Each sample hides a character tuple (c_1..c_s), c_i uniform
// over an alphabet of size l_i; the visual stream encodes the tuple, the
// audio stream encodes the deterministic partner tuple c_i' = (c_i + 1) mod
// l_i. The MI between the streams is then exactly sum(ln l_i).
struct MiSpec {
    std::vector<int> alphabet_sizes;
    int slot_dim = 16;
    double noise_sigma = 0.1;
    std::size_t dataset_size = 0;
    std::uint64_t seed = 0;
    bool coarse_labels = false;  // label = c_1 instead of the full tuple index

    void validate() const;
    std::size_t input_dim() const { return alphabet_sizes.size() * static_cast<std::size_t>(slot_dim); }
};

// Ground-truth MI in nats: sum over slots of ln(alphabet size).
double mutual_information(const MiSpec& spec);

// Number of distinct category labels the spec produces.
std::uint64_t category_count(const MiSpec& spec);

// The alphabet sizes used by the source benchmark, largest first.
const std::vector<int>& default_alphabets();

struct PairedDataset {
    Matrix visual;
    Matrix audio;
    std::vector<std::uint64_t> labels;
    MiSpec spec;

    std::size_t size() const { return labels.size(); }
    const Matrix& inputs(Modality m) const { return m == Modality::visual ? visual : audio; }
};

// Deterministic generation: the same spec (including seed) is bit-identical
// on regeneration. Labels are hidden from training; they exist for the
// diversity and probing measurements.
PairedDataset generate(const MiSpec& spec);

struct MiniBatch {
    std::vector<std::size_t> indices;
    Matrix visual;
    Matrix audio;
};

// Aligned slices of both modalities. Throws std::out_of_range on a bad index.
MiniBatch minibatch(const PairedDataset& dataset, const std::vector<std::size_t>& indices);

// Simple binary container (header: spec + seed; body: vectors and labels).
// Regenerating from the spec is the canonical path; the container exists for
// interchange.
void save_dataset(const PairedDataset& dataset, const std::string& path);
PairedDataset load_dataset(const std::string& path);

}  // namespace acc
