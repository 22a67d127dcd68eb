#include "acc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "acc/parallel.hpp"
#include "acc/rng.hpp"

namespace acc {

std::size_t unique_category_count(const std::vector<std::int64_t>& selected_ids,
                                  const std::vector<std::uint64_t>& labels) {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(selected_ids.size() * 2);
    for (std::int64_t id : selected_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= labels.size()) {
            throw std::out_of_range("unique_category_count: id out of range");
        }
        seen.insert(labels[static_cast<std::size_t>(id)]);
    }
    return seen.size();
}

double CoverageSeries::mean_count() const {
    if (counts.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t c : counts) s += static_cast<double>(c);
    return s / static_cast<double>(counts.size());
}

double CoverageSeries::tail_fraction_of_categories(std::size_t window) const {
    if (counts.empty() || total_categories == 0) return 0.0;
    const std::size_t n = (window == 0 || window > counts.size()) ? counts.size() : window;
    double s = 0.0;
    for (std::size_t i = counts.size() - n; i < counts.size(); ++i) {
        s += static_cast<double>(counts[i]);
    }
    return s / (static_cast<double>(n) * static_cast<double>(total_categories));
}

std::vector<CoverageSeries> coverage_experiment(const PairedDataset& dataset,
                                                const TrainConfig& base_config,
                                                const std::vector<SamplerKind>& samplers,
                                                const std::vector<std::size_t>& batch_sizes,
                                                std::size_t steps) {
    std::vector<CoverageSeries> all;
    for (std::size_t M : batch_sizes) {
        for (SamplerKind sampler : samplers) {
            TrainConfig config = base_config;
            config.M = M;
            config.sampler = sampler;
            CoverageSeries series;
            series.sampler = sampler;
            series.M = M;
            series.total_categories = static_cast<std::size_t>(category_count(dataset.spec));
            if (steps > 0) {
                // Enough epochs to cover the step budget; run() stops at steps.
                const std::size_t per_epoch = dataset.size() / M;
                config.epochs = steps / per_epoch + 2;
                run(config, dataset,
                    [&](const StepRecord& record) {
                        series.counts.push_back(
                            unique_category_count(record.selected_v, dataset.labels));
                    },
                    steps);
            }
            all.push_back(std::move(series));
        }
    }
    return all;
}

void write_coverage_csv(const std::vector<CoverageSeries>& series, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_coverage_csv: cannot open " + path);
    os << "step,M,sampler,unique_categories\n";
    for (const CoverageSeries& s : series) {
        for (std::size_t i = 0; i < s.counts.size(); ++i) {
            os << (i + 1) << ',' << s.M << ',' << sampler_name(s.sampler) << ',' << s.counts[i]
               << '\n';
        }
    }
}

void write_coverage_fraction_csv(const std::vector<CoverageSeries>& series,
                                 const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_coverage_fraction_csv: cannot open " + path);
    os << "step,M,sampler,fraction_of_categories,fraction_of_batch\n";
    char buf[96];
    for (const CoverageSeries& s : series) {
        for (std::size_t i = 0; i < s.counts.size(); ++i) {
            const double of_cats = s.total_categories == 0
                                       ? 0.0
                                       : static_cast<double>(s.counts[i]) /
                                             static_cast<double>(s.total_categories);
            const double of_batch =
                s.M == 0 ? 0.0 : static_cast<double>(s.counts[i]) / static_cast<double>(s.M);
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%s,%.17g,%.17g\n", i + 1, s.M,
                          sampler_name(s.sampler), of_cats, of_batch);
            os << buf;
        }
    }
}

namespace {

// Frozen query-encoder embeddings for the whole dataset, no caches kept.
Matrix probe_embeddings(const EncoderBundle& bundle, Modality modality,
                        const PairedDataset& dataset) {
    const MlpParams stack = query_composite(bundle.side(modality));
    const Matrix& inputs = dataset.inputs(modality);
    Matrix out(inputs.rows, stack.output_dim());
    parallel_for(inputs.rows, [&](std::size_t i) {
        out.set_row(i, l2_normalize(mlp_apply(stack, inputs.row_vec(i))));
    });
    return out;
}

double accuracy_of(const MlpParams& probe, const Matrix& embeddings,
                   const std::vector<std::uint64_t>& labels,
                   const std::vector<std::size_t>& idx) {
    std::size_t hits = 0;
    for (std::size_t i : idx) {
        const Vec logits = mlp_apply(probe, embeddings.row_vec(i));
        if (argmax(logits) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(idx.size());
}

}  // namespace

ProbeResult linear_probe(const EncoderBundle& bundle, Modality modality,
                         const PairedDataset& dataset, std::uint64_t split_seed) {
    if (dataset.size() < 2) throw std::invalid_argument("linear_probe: dataset too small");
    std::uint64_t max_label = 0;
    for (std::uint64_t l : dataset.labels) max_label = std::max(max_label, l);
    const std::size_t num_classes = static_cast<std::size_t>(max_label) + 1;
    if (num_classes > 20000) {
        throw std::invalid_argument("linear_probe: too many classes for a linear probe");
    }

    Rng rng(split_seed);
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t train_n = std::max<std::size_t>(1, (order.size() * 8) / 10);
    const std::vector<std::size_t> train_idx(order.begin(), order.begin() + train_n);
    const std::vector<std::size_t> test_idx(order.begin() + train_n, order.end());
    if (test_idx.empty()) throw std::invalid_argument("linear_probe: empty test split");

    std::unordered_set<std::uint64_t> train_classes;
    for (std::size_t i : train_idx) train_classes.insert(dataset.labels[i]);
    if (train_classes.size() < 2 && num_classes > 1) {
        throw std::invalid_argument("linear_probe: degenerate single-class train split");
    }

    const Matrix embeddings = probe_embeddings(bundle, modality, dataset);
    const std::size_t dim = embeddings.cols;

    // Softmax regression, zero-initialized (the objective is convex), trained
    // full batch until the loss stops moving.
    MlpParams probe;
    probe.layers.push_back({Matrix(num_classes, dim), Vec(num_classes, 0.0)});
    AdamState opt = make_adam_state(probe);

    const std::size_t max_iters = 2000;
    const double tol = 1e-6;
    double prev_loss = 0.0;
    Matrix post(train_idx.size(), num_classes);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        std::vector<double> losses(train_idx.size());
        parallel_for(train_idx.size(), [&](std::size_t r) {
            const std::size_t i = train_idx[r];
            const Vec logits = mlp_apply(probe, embeddings.row_vec(i));
            const Vec p = softmax(logits, 1.0);
            losses[r] = cross_entropy(p, static_cast<std::size_t>(dataset.labels[i]));
            post.set_row(r, p);
        });
        double loss = 0.0;
        for (double l : losses) loss += l;
        loss /= static_cast<double>(train_idx.size());

        MlpGrads grads = zero_grads_like(probe);
        Matrix& dw = grads.layers[0].weight;
        Vec& db = grads.layers[0].bias;
        const double inv_n = 1.0 / static_cast<double>(train_idx.size());
        parallel_for(num_classes, [&](std::size_t c) {
            double* dwc = dw.row(c);
            double dbc = 0.0;
            for (std::size_t r = 0; r < train_idx.size(); ++r) {
                const std::size_t i = train_idx[r];
                const double coeff =
                    (post.at(r, c) - (dataset.labels[i] == c ? 1.0 : 0.0)) * inv_n;
                const double* x = embeddings.row(i);
                for (std::size_t d = 0; d < dim; ++d) dwc[d] += coeff * x[d];
                dbc += coeff;
            }
            db[c] = dbc;
        });
        adam_step(probe, grads, opt, 0.05);
        if (iter > 0 && std::abs(loss - prev_loss) < tol) break;
        prev_loss = loss;
    }

    ProbeResult result;
    result.train_accuracy = accuracy_of(probe, embeddings, dataset.labels, train_idx);
    result.test_accuracy = accuracy_of(probe, embeddings, dataset.labels, test_idx);
    return result;
}

std::vector<MiSweepRow> mi_sweep(const std::vector<MiSpec>& specs, const TrainConfig& config,
                                 const std::vector<SamplerKind>& samplers,
                                 const std::vector<std::uint64_t>& seeds, std::size_t steps) {
    for (std::size_t i = 1; i < specs.size(); ++i) {
        if (specs[i].alphabet_sizes.size() < specs[i - 1].alphabet_sizes.size()) {
            throw std::invalid_argument("mi_sweep: specs must have ascending slot counts");
        }
        if (specs[i].dataset_size != specs[0].dataset_size) {
            throw std::invalid_argument("mi_sweep: dataset size must stay fixed across specs");
        }
    }
    std::vector<MiSweepRow> rows;
    for (const MiSpec& spec : specs) {
        // exp(sum ln l_i) is exactly the alphabet product; compute it that way
        // so the CSV carries clean integers.
        double e_mi = 1.0;
        for (int l : spec.alphabet_sizes) e_mi *= static_cast<double>(l);
        for (std::uint64_t seed : seeds) {
            // One dataset per (spec, seed) cell, shared by all samplers.
            MiSpec cell_spec = spec;
            cell_spec.seed = derive_stream_seed(seed, 201) ^ spec.seed;
            const PairedDataset dataset = generate(cell_spec);
            for (SamplerKind sampler : samplers) {
                TrainConfig cell = config;
                cell.sampler = sampler;
                cell.seed = seed;
                if (steps > 0) {
                    const std::size_t per_epoch = dataset.size() / cell.M;
                    cell.epochs = steps / per_epoch + 2;
                }
                const RunResult trained = run(cell, dataset, nullptr, steps);
                const ProbeResult probe = linear_probe(trained.bundle, Modality::visual, dataset,
                                                       derive_stream_seed(seed, 7));
                MiSweepRow row;
                row.e_mi = e_mi;
                row.sampler = sampler;
                row.seed = seed;
                row.accuracy = probe.test_accuracy;
                rows.push_back(row);
            }
        }
    }
    return rows;
}

void write_mi_csv(const std::vector<MiSweepRow>& rows, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_mi_csv: cannot open " + path);
    os << "e_mi,sampler,accuracy\n";
    char buf[96];
    for (const MiSweepRow& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%s,%.17g\n", row.e_mi, sampler_name(row.sampler),
                      row.accuracy);
        os << buf;
    }
}

}  // namespace acc
