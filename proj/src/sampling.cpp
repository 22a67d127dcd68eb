#include "acc/sampling.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace acc {

PseudoLabelResult pseudo_posterior(const Vec& candidate_key, const Matrix& query_batch) {
    if (query_batch.rows == 0) {
        throw std::invalid_argument("pseudo_posterior: empty query batch");
    }
    if (query_batch.cols != candidate_key.size()) {
        throw ShapeError("pseudo_posterior: dimension mismatch");
    }
    Vec logits(query_batch.rows);
    for (std::size_t j = 0; j < query_batch.rows; ++j) {
        const double* q = query_batch.row(j);
        double s = 0.0;
        for (std::size_t d = 0; d < query_batch.cols; ++d) s += candidate_key[d] * q[d];
        logits[j] = s;
    }
    PseudoLabelResult result;
    result.posterior = softmax(logits, 1.0);
    result.pseudo_label = argmax(result.posterior);
    return result;
}

GradientEmbedding gradient_embedding(const Vec& candidate_key, const Matrix& query_batch,
                                     const std::vector<ForwardCache>& query_caches) {
    if (query_caches.size() != query_batch.rows) {
        throw ShapeError("gradient_embedding: cache count != batch size");
    }
    if (query_batch.rows == 0) {
        throw std::invalid_argument("gradient_embedding: empty query batch");
    }
    if (query_batch.cols != candidate_key.size()) {
        throw ShapeError("gradient_embedding: key dimension mismatch");
    }
    const std::size_t penult_dim = query_caches.front().penultimate().size();
    Vec logits(query_caches.size());
    for (std::size_t j = 0; j < query_caches.size(); ++j) {
        const Vec& raw = query_caches[j].output();
        if (raw.size() != candidate_key.size() ||
            query_caches[j].penultimate().size() != penult_dim) {
            throw ShapeError("gradient_embedding: cache shape mismatch");
        }
        logits[j] = dot(candidate_key, raw);
    }
    const Vec posterior = softmax(logits, 1.0);
    const std::size_t label = argmax(posterior);

    GradientEmbedding g;
    g.key_factor = candidate_key;
    g.activation_factor.assign(penult_dim, 0.0);
    for (std::size_t j = 0; j < query_caches.size(); ++j) {
        const double coeff = posterior[j] - (j == label ? 1.0 : 0.0);
        const Vec& z = query_caches[j].penultimate();
        for (std::size_t d = 0; d < penult_dim; ++d) g.activation_factor[d] += coeff * z[d];
    }
    return g;
}

namespace {

template <bool kParallel>
std::vector<GradientEmbedding> gradient_embeddings_impl(
    const Matrix& candidate_keys, const std::vector<std::size_t>& rows,
    const Matrix& query_batch, const std::vector<ForwardCache>& query_caches) {
    std::vector<GradientEmbedding> out(rows.size());
    auto body = [&](std::size_t i) {
        out[i] = gradient_embedding(candidate_keys.row_vec(rows[i]), query_batch, query_caches);
    };
    if constexpr (kParallel) {
        parallel_for(rows.size(), body);
    } else {
        for (std::size_t i = 0; i < rows.size(); ++i) body(i);
    }
    return out;
}

}  // namespace

std::vector<GradientEmbedding> gradient_embeddings(const Matrix& candidate_keys,
                                                   const std::vector<std::size_t>& rows,
                                                   const Matrix& query_batch,
                                                   const std::vector<ForwardCache>& query_caches) {
    return gradient_embeddings_impl<true>(candidate_keys, rows, query_batch, query_caches);
}

std::vector<GradientEmbedding> gradient_embeddings_serial(
    const Matrix& candidate_keys, const std::vector<std::size_t>& rows,
    const Matrix& query_batch, const std::vector<ForwardCache>& query_caches) {
    return gradient_embeddings_impl<false>(candidate_keys, rows, query_batch, query_caches);
}

double grad_distance_sq(const GradientEmbedding& a, const GradientEmbedding& b) {
    if (a.key_factor.size() != b.key_factor.size() ||
        a.activation_factor.size() != b.activation_factor.size()) {
        throw ShapeError("grad_distance_sq: dimension mismatch");
    }
    // ||u_a w_a^T - u_b w_b^T||_F^2 expanded through traces of rank-1 terms.
    const double d = norm_sq(a.key_factor) * norm_sq(a.activation_factor) +
                     norm_sq(b.key_factor) * norm_sq(b.activation_factor) -
                     2.0 * dot(a.key_factor, b.key_factor) *
                         dot(a.activation_factor, b.activation_factor);
    return d > 0.0 ? d : 0.0;
}

std::vector<std::size_t> kmeanspp_seed(const Matrix& points, std::size_t num_seeds, Rng& rng) {
    auto dist_sq = [&points](std::size_t i, std::size_t j) {
        const double* a = points.row(i);
        const double* b = points.row(j);
        double s = 0.0;
        for (std::size_t d = 0; d < points.cols; ++d) {
            const double diff = a[d] - b[d];
            s += diff * diff;
        }
        return s;
    };
    return kmeanspp_seed(points.rows, num_seeds, dist_sq, rng);
}

namespace {

// Pool rows whose sample id is not currently in the dictionary, pool order.
std::vector<std::size_t> candidate_rows(const CandidatePool& pool, const KeyDictionary& dict,
                                        std::size_t M, const char* who) {
    const auto excluded = dict.id_set();
    std::vector<std::size_t> rows;
    rows.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (excluded.find(pool.ids[i]) == excluded.end()) rows.push_back(i);
    }
    if (rows.size() < M) {
        throw CapacityError(std::string(who) + ": fewer candidates than requested");
    }
    return rows;
}

std::vector<std::int64_t> rows_to_ids(const CandidatePool& pool,
                                      const std::vector<std::size_t>& rows,
                                      const std::vector<std::size_t>& picks) {
    std::vector<std::int64_t> ids;
    ids.reserve(picks.size());
    for (std::size_t p : picks) ids.push_back(pool.ids[rows[p]]);
    return ids;
}

std::vector<std::size_t> uniform_fallback(std::size_t count, std::size_t M, Rng& rng,
                                          const char* who) {
    std::fprintf(stderr, "[acc] %s: zero spread among candidates, falling back to uniform\n",
                 who);
    return rng.sample_without_replacement(count, M);
}

}  // namespace

std::vector<std::int64_t> active_select(const CandidatePool& pool, const KeyDictionary& dict,
                                        const Matrix& query_batch,
                                        const std::vector<ForwardCache>& query_caches,
                                        std::size_t M, Rng& rng,
                                        std::vector<double>* selected_grad_norms) {
    const std::vector<std::size_t> rows = candidate_rows(pool, dict, M, "active_select");
    const std::vector<GradientEmbedding> grads =
        gradient_embeddings(pool.embeddings, rows, query_batch, query_caches);

    std::vector<std::size_t> picks;
    try {
        picks = kmeanspp_seed(
            grads.size(), M,
            [&grads](std::size_t i, std::size_t j) { return grad_distance_sq(grads[i], grads[j]); },
            rng);
    } catch (const DegenerateInputError&) {
        picks = uniform_fallback(grads.size(), M, rng, "active_select");
    }
    if (selected_grad_norms) {
        selected_grad_norms->clear();
        selected_grad_norms->reserve(picks.size());
        for (std::size_t p : picks) {
            selected_grad_norms->push_back(std::sqrt(grads[p].norm_sq()));
        }
    }
    return rows_to_ids(pool, rows, picks);
}

std::vector<std::int64_t> feature_select(const CandidatePool& pool, const KeyDictionary& dict,
                                         std::size_t M, Rng& rng) {
    const std::vector<std::size_t> rows = candidate_rows(pool, dict, M, "feature_select");
    const Matrix& keys = pool.embeddings;
    auto dist_sq = [&keys, &rows](std::size_t i, std::size_t j) {
        const double* a = keys.row(rows[i]);
        const double* b = keys.row(rows[j]);
        double s = 0.0;
        for (std::size_t d = 0; d < keys.cols; ++d) {
            const double diff = a[d] - b[d];
            s += diff * diff;
        }
        return s;
    };
    std::vector<std::size_t> picks;
    try {
        picks = kmeanspp_seed(rows.size(), M, dist_sq, rng);
    } catch (const DegenerateInputError&) {
        picks = uniform_fallback(rows.size(), M, rng, "feature_select");
    }
    return rows_to_ids(pool, rows, picks);
}

std::vector<std::int64_t> random_select(const CandidatePool& pool, const KeyDictionary& dict,
                                        std::size_t M, Rng& rng) {
    const std::vector<std::size_t> rows = candidate_rows(pool, dict, M, "random_select");
    const std::vector<std::size_t> picks = rng.sample_without_replacement(rows.size(), M);
    return rows_to_ids(pool, rows, picks);
}

std::vector<std::int64_t> ohem_select(const CandidatePool& pool, const KeyDictionary& dict,
                                      const Matrix& query_batch, std::size_t M) {
    const std::vector<std::size_t> rows = candidate_rows(pool, dict, M, "ohem_select");
    std::vector<double> losses(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const PseudoLabelResult r = pseudo_posterior(pool.embeddings.row_vec(rows[i]), query_batch);
        losses[i] = cross_entropy(r.posterior, r.pseudo_label);
    });
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (losses[a] != losses[b]) return losses[a] > losses[b];
        return pool.ids[rows[a]] < pool.ids[rows[b]];
    });
    order.resize(M);
    return rows_to_ids(pool, rows, order);
}

}  // namespace acc
