#include "acc/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "acc/parallel.hpp"

namespace acc {

const char* sampler_name(SamplerKind kind) {
    switch (kind) {
        case SamplerKind::active: return "active";
        case SamplerKind::feature: return "feature";
        case SamplerKind::random: return "random";
        case SamplerKind::ohem: return "ohem";
    }
    return "?";
}

SamplerKind sampler_from_name(const std::string& name) {
    if (name == "active") return SamplerKind::active;
    if (name == "feature") return SamplerKind::feature;
    if (name == "random") return SamplerKind::random;
    if (name == "ohem") return SamplerKind::ohem;
    throw std::invalid_argument("unknown sampler: " + name);
}

void TrainConfig::validate(std::size_t dataset_size) const {
    if (M < 1) throw std::invalid_argument("config field M: must be >= 1");
    if (M > K) throw std::invalid_argument("config field K: requires M <= K");
    if (K > N) throw std::invalid_argument("config field N: requires K <= N");
    if (N > dataset_size) {
        throw std::invalid_argument("config field N: requires N <= dataset size");
    }
    if (!(tau > 0.0)) throw std::invalid_argument("config field tau: must be > 0");
    if (m < 0.0 || m >= 1.0) throw std::invalid_argument("config field m: must be in [0, 1)");
    if (lr < 0.0) throw std::invalid_argument("config field lr: must be >= 0");
    if (hidden_dim < 1) throw std::invalid_argument("config field hidden_dim: must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("config field embed_dim: must be >= 1");
}

Vec contrastive_posterior(const Vec& query, const Vec& positive_key,
                          const Matrix& dict_embeddings, double tau) {
    if (positive_key.size() != query.size() ||
        (dict_embeddings.rows > 0 && dict_embeddings.cols != query.size())) {
        throw ShapeError("contrastive_posterior: dimension mismatch");
    }
    Vec logits(1 + dict_embeddings.rows);
    logits[0] = dot(query, positive_key);
    for (std::size_t j = 0; j < dict_embeddings.rows; ++j) {
        const double* k = dict_embeddings.row(j);
        double s = 0.0;
        for (std::size_t d = 0; d < query.size(); ++d) s += query[d] * k[d];
        logits[1 + j] = s;
    }
    return softmax(logits, tau);
}

namespace {

std::size_t unique_labels_of(const std::vector<std::int64_t>& ids,
                             const std::vector<std::uint64_t>& labels) {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(ids.size() * 2);
    for (std::int64_t id : ids) seen.insert(labels[static_cast<std::size_t>(id)]);
    return seen.size();
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const PairedDataset& dataset)
    : config_(config), dataset_(dataset), streams_(config.seed) {
    config_.validate(dataset.size());
    BundleConfig bc;
    bc.visual_input_dim = dataset.visual.cols;
    bc.audio_input_dim = dataset.audio.cols;
    bc.hidden_dim = config_.hidden_dim;
    bc.embed_dim = config_.embed_dim;
    bc.momentum = config_.m;
    bc.temperature = config_.tau;
    bc.heads_enabled = config_.heads_enabled;
    bc.init = config_.init;
    bundle_ = make_bundle(bc, streams_.params);
    adam_v_ = make_adam_state(query_composite(bundle_.visual));
    adam_a_ = make_adam_state(query_composite(bundle_.audio));
    dict_v_ = init_dictionary(dataset_, Modality::visual, bundle_, config_.K, streams_.dictionary);
    dict_a_ = init_dictionary(dataset_, Modality::audio, bundle_, config_.K, streams_.dictionary);
}

void Trainer::reload_pools() {
    auto load = [&](Modality m) {
        CandidatePool pool;
        const std::vector<std::size_t> picks =
            streams_.pool.sample_without_replacement(dataset_.size(), config_.N);
        Matrix inputs(config_.N, dataset_.inputs(m).cols);
        for (std::size_t i = 0; i < config_.N; ++i) {
            inputs.set_row(i, dataset_.inputs(m).row_vec(picks[i]));
        }
        pool.embeddings = encode_key(bundle_, m, inputs);
        pool.ids.reserve(config_.N);
        for (std::size_t p : picks) pool.ids.push_back(static_cast<std::int64_t>(p));
        return pool;
    };
    pool_v_ = load(Modality::visual);
    pool_a_ = load(Modality::audio);
}

double Trainer::warmup_lr() const {
    if (config_.warmup_steps == 0) return config_.lr;
    const double ramp = static_cast<double>(global_step_) /
                        static_cast<double>(config_.warmup_steps);
    return config_.lr * (ramp < 1.0 ? ramp : 1.0);
}

struct Trainer::DirectionResult {
    double mean_loss = 0.0;
    MlpGrads grads;  // for the query-side composite stack
};

Trainer::DirectionResult Trainer::code_direction(Modality query_modality, const MiniBatch& batch,
                                                 const BatchEncoding& queries,
                                                 const Matrix& positives,
                                                 const KeyDictionary& dict) const {
    (void)batch;
    const MlpParams stack = query_composite(bundle_.side(query_modality));
    const DictSnapshot snap = dict.snapshot();
    const std::size_t n = queries.embeddings.rows;
    const double tau = bundle_.temperature;

    std::vector<double> losses(n, 0.0);
    std::vector<MlpGrads> per_item(n);
    parallel_for(n, [&](std::size_t i) {
        const Vec q = queries.embeddings.row_vec(i);
        const Vec posterior = contrastive_posterior(q, positives.row_vec(i), snap.embeddings, tau);
        losses[i] = cross_entropy(posterior, 0);
        // dL/dq = sum_j (p_j - [j=0]) k_j / tau
        Vec dq(q.size(), 0.0);
        {
            const double coeff0 = (posterior[0] - 1.0) / tau;
            const double* k0 = positives.row(i);
            for (std::size_t d = 0; d < q.size(); ++d) dq[d] += coeff0 * k0[d];
        }
        for (std::size_t j = 0; j < snap.embeddings.rows; ++j) {
            const double coeff = posterior[1 + j] / tau;
            const double* k = snap.embeddings.row(j);
            for (std::size_t d = 0; d < q.size(); ++d) dq[d] += coeff * k[d];
        }
        const Vec draw = l2_normalize_backward(queries.caches[i].output(), dq);
        per_item[i] = mlp_backward(stack, queries.caches[i], draw);
    });

    DirectionResult result;
    result.grads = zero_grads_like(stack);
    // Fixed-order reduction keeps results identical for any worker count.
    for (std::size_t i = 0; i < n; ++i) accumulate(result.grads, per_item[i]);
    scale(result.grads, 1.0 / static_cast<double>(n));
    double total = 0.0;
    for (double l : losses) total += l;
    result.mean_loss = total / static_cast<double>(n);
    return result;
}

std::vector<KeyEntry> Trainer::pool_entries(const CandidatePool& pool,
                                            const std::vector<std::int64_t>& ids) const {
    std::unordered_map<std::int64_t, std::size_t> row_of;
    row_of.reserve(pool.ids.size() * 2);
    for (std::size_t i = 0; i < pool.ids.size(); ++i) row_of.emplace(pool.ids[i], i);
    std::vector<KeyEntry> entries;
    entries.reserve(ids.size());
    for (std::int64_t id : ids) {
        KeyEntry e;
        e.sample_id = id;
        e.embedding = pool.embeddings.row_vec(row_of.at(id));
        entries.push_back(std::move(e));
    }
    return entries;
}

StepMetrics Trainer::step(const std::vector<std::size_t>& batch_indices) {
    const MiniBatch batch = minibatch(dataset_, batch_indices);
    global_step_ += 1;

    const BatchEncoding queries_v = encode_query(bundle_, Modality::visual, batch.visual);
    const BatchEncoding queries_a = encode_query(bundle_, Modality::audio, batch.audio);

    // Fresh key encodings of the mini-batch; positives for the posteriors and,
    // under the random sampler, also the entries that enter the dictionaries.
    const Matrix keys_v = encode_key(bundle_, Modality::visual, batch.visual);
    const Matrix keys_a = encode_key(bundle_, Modality::audio, batch.audio);

    std::vector<std::int64_t> selected_v;
    std::vector<std::int64_t> selected_a;
    double grad_norm_v = 0.0;
    double grad_norm_a = 0.0;

    if (config_.sampler == SamplerKind::random) {
        selected_v.assign(batch.indices.begin(), batch.indices.end());
        selected_a = selected_v;
        std::vector<KeyEntry> entries_v(batch.indices.size());
        std::vector<KeyEntry> entries_a(batch.indices.size());
        for (std::size_t i = 0; i < batch.indices.size(); ++i) {
            entries_v[i].sample_id = static_cast<std::int64_t>(batch.indices[i]);
            entries_v[i].embedding = keys_v.row_vec(i);
            entries_a[i].sample_id = static_cast<std::int64_t>(batch.indices[i]);
            entries_a[i].embedding = keys_a.row_vec(i);
        }
        dict_v_.enqueue_dequeue(entries_v);
        dict_a_.enqueue_dequeue(entries_a);
    } else {
        if (pool_v_.size() == 0 || pool_a_.size() == 0) {
            throw CapacityError("train step: candidate pools not loaded");
        }
        // Negative video keys are scored against the audio queries and vice
        // versa; gradients live in the last layer of the opposite modality's
        // query encoder.
        switch (config_.sampler) {
            case SamplerKind::active: {
                std::vector<double> norms;
                selected_v = active_select(pool_v_, dict_v_, queries_a.embeddings,
                                           queries_a.caches, config_.M, streams_.sampler, &norms);
                grad_norm_v = mean(norms);
                selected_a = active_select(pool_a_, dict_a_, queries_v.embeddings,
                                           queries_v.caches, config_.M, streams_.sampler, &norms);
                grad_norm_a = mean(norms);
                break;
            }
            case SamplerKind::feature:
                selected_v = feature_select(pool_v_, dict_v_, config_.M, streams_.sampler);
                selected_a = feature_select(pool_a_, dict_a_, config_.M, streams_.sampler);
                break;
            case SamplerKind::ohem:
                selected_v = ohem_select(pool_v_, dict_v_, queries_a.embeddings, config_.M);
                selected_a = ohem_select(pool_a_, dict_a_, queries_v.embeddings, config_.M);
                break;
            case SamplerKind::random:
                break;
        }
        dict_v_.enqueue_dequeue(pool_entries(pool_v_, selected_v));
        dict_a_.enqueue_dequeue(pool_entries(pool_a_, selected_a));
    }

    return finish_step(batch, queries_v, queries_a, keys_v, keys_a, std::move(selected_v),
                       std::move(selected_a), grad_norm_v, grad_norm_a);
}

StepMetrics Trainer::baseline_step(const std::vector<std::size_t>& batch_indices) {
    const MiniBatch batch = minibatch(dataset_, batch_indices);
    global_step_ += 1;

    const Matrix keys_v = encode_key(bundle_, Modality::visual, batch.visual);
    const Matrix keys_a = encode_key(bundle_, Modality::audio, batch.audio);

    std::vector<KeyEntry> entries_v(batch.indices.size());
    std::vector<KeyEntry> entries_a(batch.indices.size());
    for (std::size_t i = 0; i < batch.indices.size(); ++i) {
        entries_v[i].sample_id = static_cast<std::int64_t>(batch.indices[i]);
        entries_v[i].embedding = keys_v.row_vec(i);
        entries_a[i].sample_id = static_cast<std::int64_t>(batch.indices[i]);
        entries_a[i].embedding = keys_a.row_vec(i);
    }
    dict_v_.enqueue_dequeue(entries_v);
    dict_a_.enqueue_dequeue(entries_a);

    const BatchEncoding queries_v = encode_query(bundle_, Modality::visual, batch.visual);
    const BatchEncoding queries_a = encode_query(bundle_, Modality::audio, batch.audio);

    std::vector<std::int64_t> selected(batch.indices.begin(), batch.indices.end());
    return finish_step(batch, queries_v, queries_a, keys_v, keys_a, selected, selected, 0.0, 0.0);
}

StepMetrics Trainer::finish_step(const MiniBatch& batch, const BatchEncoding& queries_v,
                                 const BatchEncoding& queries_a, const Matrix& keys_v,
                                 const Matrix& keys_a, std::vector<std::int64_t> selected_v,
                                 std::vector<std::int64_t> selected_a, double grad_norm_v,
                                 double grad_norm_a) {
    // Visual-to-audio coding reads the audio dictionary and vice versa.
    const DirectionResult v2a =
        code_direction(Modality::visual, batch, queries_v, keys_a, dict_a_);
    const DirectionResult a2v =
        code_direction(Modality::audio, batch, queries_a, keys_v, dict_v_);

    const double guard = 10.0 * std::log(static_cast<double>(config_.K + 1));
    if (!std::isfinite(v2a.mean_loss) || !std::isfinite(a2v.mean_loss) ||
        v2a.mean_loss > guard || a2v.mean_loss > guard) {
        std::ostringstream dump;
        dump << "training diverged at step " << global_step_ << ": loss_v2a=" << v2a.mean_loss
             << " loss_a2v=" << a2v.mean_loss << " guard=" << guard
             << " lr=" << warmup_lr() << " K=" << config_.K << " M=" << config_.M;
        throw NumericDivergenceError(dump.str());
    }

    const double lr = warmup_lr();
    MlpParams stack_v = query_composite(bundle_.visual);
    adam_step(stack_v, v2a.grads, adam_v_, lr);
    store_query_composite(bundle_.visual, stack_v);
    MlpParams stack_a = query_composite(bundle_.audio);
    adam_step(stack_a, a2v.grads, adam_a_, lr);
    store_query_composite(bundle_.audio, stack_a);

    momentum_update(bundle_, Modality::visual);
    momentum_update(bundle_, Modality::audio);
    if (config_.heads_enabled) cross_modal_head_update(bundle_);

    StepMetrics metrics;
    metrics.step = global_step_;
    metrics.loss_v2a = v2a.mean_loss;
    metrics.loss_a2v = a2v.mean_loss;
    metrics.grad_norm_v = grad_norm_v;
    metrics.grad_norm_a = grad_norm_a;
    metrics.dict_unique_categories_v = unique_labels_of(dict_v_.snapshot().ids, dataset_.labels);
    metrics.dict_unique_categories_a = unique_labels_of(dict_a_.snapshot().ids, dataset_.labels);

    last_record_.metrics = metrics;
    last_record_.selected_v = std::move(selected_v);
    last_record_.selected_a = std::move(selected_a);
    return metrics;
}

double Trainer::loss_and_gradients(const std::vector<std::size_t>& batch_indices,
                                   MlpGrads* visual_grads, MlpGrads* audio_grads) const {
    const MiniBatch batch = minibatch(dataset_, batch_indices);
    const BatchEncoding queries_v = encode_query(bundle_, Modality::visual, batch.visual);
    const BatchEncoding queries_a = encode_query(bundle_, Modality::audio, batch.audio);
    const Matrix keys_v = encode_key(bundle_, Modality::visual, batch.visual);
    const Matrix keys_a = encode_key(bundle_, Modality::audio, batch.audio);
    const DirectionResult v2a =
        code_direction(Modality::visual, batch, queries_v, keys_a, dict_a_);
    const DirectionResult a2v =
        code_direction(Modality::audio, batch, queries_a, keys_v, dict_v_);
    if (visual_grads) *visual_grads = v2a.grads;
    if (audio_grads) *audio_grads = a2v.grads;
    return v2a.mean_loss + a2v.mean_loss;
}

double Trainer::evaluate_loss(const std::vector<std::size_t>& batch_indices) const {
    const MiniBatch batch = minibatch(dataset_, batch_indices);
    const BatchEncoding queries_v = encode_query(bundle_, Modality::visual, batch.visual);
    const BatchEncoding queries_a = encode_query(bundle_, Modality::audio, batch.audio);
    const Matrix keys_v = encode_key(bundle_, Modality::visual, batch.visual);
    const Matrix keys_a = encode_key(bundle_, Modality::audio, batch.audio);
    const DictSnapshot snap_a = dict_a_.snapshot();
    const DictSnapshot snap_v = dict_v_.snapshot();
    double total = 0.0;
    for (std::size_t i = 0; i < batch.indices.size(); ++i) {
        const Vec pv = contrastive_posterior(queries_v.embeddings.row_vec(i), keys_a.row_vec(i),
                                             snap_a.embeddings, bundle_.temperature);
        const Vec pa = contrastive_posterior(queries_a.embeddings.row_vec(i), keys_v.row_vec(i),
                                             snap_v.embeddings, bundle_.temperature);
        total += cross_entropy(pv, 0) + cross_entropy(pa, 0);
    }
    return total / static_cast<double>(batch.indices.size());
}

namespace {

RunResult drive(const TrainConfig& config, const PairedDataset& dataset,
                const StepObserver& observer, std::size_t max_steps, bool baseline) {
    Trainer trainer(config, dataset);
    RunResult result;
    const std::size_t steps_per_epoch = dataset.size() / config.M;
    const bool needs_pools = !baseline && config.sampler != SamplerKind::random;

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    bool done = false;
    for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
        if (needs_pools) trainer.reload_pools();
        trainer.data_order_rng().shuffle(order);
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::vector<std::size_t> indices(order.begin() + b * config.M,
                                                   order.begin() + (b + 1) * config.M);
            const StepMetrics metrics =
                baseline ? trainer.baseline_step(indices) : trainer.step(indices);
            result.history.push_back(metrics);
            if (observer) observer(trainer.last_record());
            if (max_steps > 0 && result.history.size() >= max_steps) {
                done = true;
                break;
            }
        }
    }
    result.bundle = trainer.bundle();
    result.adam_visual = trainer.adam_visual();
    result.adam_audio = trainer.adam_audio();
    return result;
}

}  // namespace

RunResult run(const TrainConfig& config, const PairedDataset& dataset,
              const StepObserver& observer, std::size_t max_steps) {
    return drive(config, dataset, observer, max_steps, false);
}

RunResult run_baseline(const TrainConfig& config, const PairedDataset& dataset,
                       const StepObserver& observer, std::size_t max_steps) {
    return drive(config, dataset, observer, max_steps, true);
}

void write_metrics_csv(const std::vector<StepMetrics>& history, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    os << "step,loss_v2a,loss_a2v,dict_unique_categories_v,dict_unique_categories_a\n";
    char buf[160];
    for (const StepMetrics& m : history) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%zu,%zu\n", m.step, m.loss_v2a,
                      m.loss_a2v, m.dict_unique_categories_v, m.dict_unique_categories_a);
        os << buf;
    }
}

}  // namespace acc
