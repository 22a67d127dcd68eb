#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acc/data.hpp"
#include "acc/dictionary.hpp"
#include "acc/encoders.hpp"
#include "acc/sampling.hpp"

namespace acc {

enum class SamplerKind { active, feature, random, ohem };

const char* sampler_name(SamplerKind kind);
SamplerKind sampler_from_name(const std::string& name);

struct TrainConfig {
    std::size_t M = 128;             // mini-batch size
    std::size_t K = 30 * 128;        // dictionary size
    std::size_t N = 300 * 128;       // candidate pool size
    double m = 0.999;                // key-encoder momentum
    double tau = 0.7;                // softmax temperature
    double lr = 1e-3;                // peak learning rate
    std::size_t warmup_steps = 500;  // linear warm-up length
    std::size_t epochs = 1;
    SamplerKind sampler = SamplerKind::active;
    bool heads_enabled = false;
    std::uint64_t seed = 0;

    // Encoder architecture (input dims come from the dataset).
    std::size_t hidden_dim = 64;
    std::size_t embed_dim = 32;
    InitScheme init = InitScheme::fan_in_uniform;

    // Throws std::invalid_argument naming the offending field.
    void validate(std::size_t dataset_size) const;
};

struct StepMetrics {
    std::size_t step = 0;
    double loss_v2a = 0.0;
    double loss_a2v = 0.0;
    std::size_t dict_unique_categories_v = 0;
    std::size_t dict_unique_categories_a = 0;
    double grad_norm_v = 0.0;  // mean gradient-embedding norm of selected S_v
    double grad_norm_a = 0.0;
};

// Step observer payload for the diversity measurements and trace output.
struct StepRecord {
    StepMetrics metrics;
    std::vector<std::int64_t> selected_v;
    std::vector<std::int64_t> selected_a;
};

using StepObserver = std::function<void(const StepRecord&)>;

// (K+1)-way contrastive posterior: index 0 carries the positive logit
// q.k+ / tau, indices 1..K the dictionary logits.
Vec contrastive_posterior(const Vec& query, const Vec& positive_key,
                          const Matrix& dict_embeddings, double tau);

// Owns all mutable training state and executes one bi-directional
// contrastive coding step at a time. run()/run_baseline() below drive it.
class Trainer {
public:
    Trainer(const TrainConfig& config, const PairedDataset& dataset);

    // One step of the active algorithm (or its sampler variants):
    // select negatives for both dictionaries, enqueue, compute bi-directional
    // posteriors, backprop into the query encoders, momentum-update the key
    // encoders (and heads when enabled).
    StepMetrics step(const std::vector<std::size_t>& batch_indices);

    // Same coding step but with the mini-batch keys enqueued directly and no
    // pools, i.e. the coding loop without active sampling.
    StepMetrics baseline_step(const std::vector<std::size_t>& batch_indices);

    void reload_pools();

    const EncoderBundle& bundle() const { return bundle_; }
    EncoderBundle& mutable_bundle() { return bundle_; }
    const KeyDictionary& dict_v() const { return dict_v_; }
    const KeyDictionary& dict_a() const { return dict_a_; }
    const AdamState& adam_visual() const { return adam_v_; }
    const AdamState& adam_audio() const { return adam_a_; }
    AdamState& mutable_adam_visual() { return adam_v_; }
    AdamState& mutable_adam_audio() { return adam_a_; }
    std::size_t global_step() const { return global_step_; }
    Rng& data_order_rng() { return streams_.data_order; }
    const StepRecord& last_record() const { return last_record_; }

    // Loss of the given batch under the current parameters, no mutation.
    // Exposed for gradient checking.
    double evaluate_loss(const std::vector<std::size_t>& batch_indices) const;

    // Same loss together with the analytic gradients that a step would apply
    // to each query stack; no mutation.
    double loss_and_gradients(const std::vector<std::size_t>& batch_indices,
                              MlpGrads* visual_grads, MlpGrads* audio_grads) const;

private:
    struct DirectionResult;

    DirectionResult code_direction(Modality query_modality, const MiniBatch& batch,
                                   const BatchEncoding& queries, const Matrix& positives,
                                   const KeyDictionary& dict) const;
    std::vector<KeyEntry> pool_entries(const CandidatePool& pool,
                                       const std::vector<std::int64_t>& ids) const;
    double warmup_lr() const;
    StepMetrics finish_step(const MiniBatch& batch, const BatchEncoding& queries_v,
                            const BatchEncoding& queries_a, const Matrix& keys_v,
                            const Matrix& keys_a, std::vector<std::int64_t> selected_v,
                            std::vector<std::int64_t> selected_a, double grad_norm_v,
                            double grad_norm_a);

    TrainConfig config_;
    const PairedDataset& dataset_;
    RngStreams streams_;
    EncoderBundle bundle_;
    AdamState adam_v_;
    AdamState adam_a_;
    KeyDictionary dict_v_;
    KeyDictionary dict_a_;
    CandidatePool pool_v_;
    CandidatePool pool_a_;
    std::size_t global_step_ = 0;
    StepRecord last_record_;
};

struct RunResult {
    std::vector<StepMetrics> history;
    EncoderBundle bundle;
    AdamState adam_visual;
    AdamState adam_audio;
};

// Full training loop: per-epoch pool reload, seeded batch shuffle, steps.
// max_steps == 0 means run all epochs * floor(n / M) steps; a nonzero value
// stops early, which is how the fixed-iteration experiments run.
RunResult run(const TrainConfig& config, const PairedDataset& dataset,
              const StepObserver& observer = nullptr, std::size_t max_steps = 0);

// Coding without active sampling: mini-batch keys are enqueued directly.
RunResult run_baseline(const TrainConfig& config, const PairedDataset& dataset,
                       const StepObserver& observer = nullptr, std::size_t max_steps = 0);

// Metrics CSV with the canonical header, one row per step.
void write_metrics_csv(const std::vector<StepMetrics>& history, const std::string& path);

}  // namespace acc
