#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acc/data.hpp"
#include "acc/training.hpp"

namespace acc {

// Number of distinct category labels among the selected sample ids.
// Throws std::out_of_range on an id outside the label table.
std::size_t unique_category_count(const std::vector<std::int64_t>& selected_ids,
                                  const std::vector<std::uint64_t>& labels);

// Per-step unique-category counts of the negatives selected for the visual
// dictionary by one sampler at one batch size.
struct CoverageSeries {
    SamplerKind sampler = SamplerKind::random;
    std::size_t M = 0;
    std::size_t total_categories = 0;
    std::vector<std::size_t> counts;

    double mean_count() const;
    // Mean coverage as a fraction of all categories over the last `window`
    // steps (whole series when window is 0 or larger than the series).
    double tail_fraction_of_categories(std::size_t window) const;
};

// Runs each sampler at each batch size under identical seeds (so the data
// order matches across samplers) and logs per-step coverage of the selected
// negatives.
std::vector<CoverageSeries> coverage_experiment(const PairedDataset& dataset,
                                                const TrainConfig& base_config,
                                                const std::vector<SamplerKind>& samplers,
                                                const std::vector<std::size_t>& batch_sizes,
                                                std::size_t steps);

void write_coverage_csv(const std::vector<CoverageSeries>& series, const std::string& path);
// Companion file with per-step fractions (of the category count and of M),
// since the raw-count units alone are ambiguous across batch sizes.
void write_coverage_fraction_csv(const std::vector<CoverageSeries>& series,
                                 const std::string& path);

struct ProbeResult {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// Multinomial logistic probe on frozen query-encoder embeddings, 80/20 split
// by split_seed, trained full batch to convergence. Deterministic given the
// split seed. Throws std::invalid_argument when the train split degenerates
// to a single class while the dataset has several.
ProbeResult linear_probe(const EncoderBundle& bundle, Modality modality,
                         const PairedDataset& dataset, std::uint64_t split_seed);

struct MiSweepRow {
    double e_mi = 0.0;  // exp of the ground-truth MI
    SamplerKind sampler = SamplerKind::random;
    std::uint64_t seed = 0;
    double accuracy = 0.0;  // probe test accuracy
};

// Trains every sampler on every spec with shared seeds and probes the frozen
// visual query encoder. Specs must come in ascending slot count; the dataset
// size is held fixed across cells. steps == 0 runs full epochs.
std::vector<MiSweepRow> mi_sweep(const std::vector<MiSpec>& specs, const TrainConfig& config,
                                 const std::vector<SamplerKind>& samplers,
                                 const std::vector<std::uint64_t>& seeds, std::size_t steps);

void write_mi_csv(const std::vector<MiSweepRow>& rows, const std::string& path);

}  // namespace acc
