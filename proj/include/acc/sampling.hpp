#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "acc/dictionary.hpp"
#include "acc/numerics.hpp"
#include "acc/parallel.hpp"
#include "acc/rng.hpp"

namespace acc {

// Per-epoch candidate set: sample ids with their key embeddings, encoded once
// when the pool is loaded and not refreshed within the epoch.
struct CandidatePool {
    std::vector<std::int64_t> ids;
    Matrix embeddings;

    std::size_t size() const { return ids.size(); }
};

// Posterior of a candidate key over the query mini-batch (M-way softmax of
// dot products at temperature 1) plus the argmax pseudo-label, ties to the
// lowest index.
struct PseudoLabelResult {
    Vec posterior;
    std::size_t pseudo_label = 0;
};

PseudoLabelResult pseudo_posterior(const Vec& candidate_key, const Matrix& query_batch);

// Last-layer gradient of the pseudo-label cross-entropy, stored in factored
// form: the full gradient is the outer product key_factor * activation_factor^T.
// The factorization is exact because the score differentiated here reads the
// final affine layer's output directly (normalization sits outside the
// differentiated path), so storage is O(d + d') instead of O(d * d').
struct GradientEmbedding {
    Vec key_factor;         // candidate key, dim d
    Vec activation_factor;  // sum_j (p_j - [j == label]) z_j, dim d'

    double norm_sq() const { return acc::norm_sq(key_factor) * acc::norm_sq(activation_factor); }
    bool is_zero() const { return norm_sq() == 0.0; }
};

// Gradient embedding of one candidate against a query batch. The caches must
// come from the matching encode_query call; z_j is each query's penultimate
// activation and the logits are formed from its raw final-layer output.
GradientEmbedding gradient_embedding(const Vec& candidate_key, const Matrix& query_batch,
                                     const std::vector<ForwardCache>& query_caches);

// Scores many candidates at once; pure map, so the parallel kernel and the
// serial reference agree bit for bit.
std::vector<GradientEmbedding> gradient_embeddings(const Matrix& candidate_keys,
                                                   const std::vector<std::size_t>& rows,
                                                   const Matrix& query_batch,
                                                   const std::vector<ForwardCache>& query_caches);
std::vector<GradientEmbedding> gradient_embeddings_serial(const Matrix& candidate_keys,
                                                          const std::vector<std::size_t>& rows,
                                                          const Matrix& query_batch,
                                                          const std::vector<ForwardCache>& query_caches);

// Squared Frobenius distance between two factored gradients, computed without
// materializing the outer products.
double grad_distance_sq(const GradientEmbedding& a, const GradientEmbedding& b);

// k-means++ seed initialization over an abstract point set: the first seed is
// uniform, each next one is drawn with probability proportional to squared
// distance from the nearest already-chosen seed. dist_sq must be a pure
// symmetric function with dist_sq(i, i) == 0. Throws CapacityError when
// num_seeds exceeds count and DegenerateInputError when every remaining point
// has zero mass (e.g. all points identical).
template <typename DistSqFn>
std::vector<std::size_t> kmeanspp_seed(std::size_t count, std::size_t num_seeds,
                                       DistSqFn&& dist_sq, Rng& rng) {
    if (num_seeds > count) throw CapacityError("kmeanspp_seed: num_seeds exceeds population");
    std::vector<std::size_t> chosen;
    if (num_seeds == 0) return chosen;
    chosen.reserve(num_seeds);

    const std::size_t first = rng.next_below(count);
    chosen.push_back(first);

    std::vector<double> min_dist(count);
    parallel_for(count, [&](std::size_t i) { min_dist[i] = dist_sq(i, first); });

    std::vector<double> cumulative(count);
    while (chosen.size() < num_seeds) {
        double total = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            total += min_dist[i];
            cumulative[i] = total;
        }
        if (total <= 0.0) {
            throw DegenerateInputError("kmeanspp_seed: no remaining point has positive mass");
        }
        const double r = rng.next_double() * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
        const std::size_t pick = it == cumulative.end()
                                     ? count - 1
                                     : static_cast<std::size_t>(it - cumulative.begin());
        chosen.push_back(pick);
        min_dist[pick] = 0.0;
        parallel_for(count, [&](std::size_t i) {
            const double d = dist_sq(i, pick);
            if (d < min_dist[i]) min_dist[i] = d;
        });
    }
    return chosen;
}

// Convenience overload over matrix rows with squared euclidean distance.
std::vector<std::size_t> kmeanspp_seed(const Matrix& points, std::size_t num_seeds, Rng& rng);

// Uncertainty-plus-diversity selection: gradient embeddings for every pool
// candidate outside the dictionary, then k-means++ seeding over them. When
// every candidate gradient is zero (all pseudo-posteriors one-hot) the spread
// is undefined and selection falls back to uniform sampling with a warning.
// Optionally reports the Frobenius norms of the selected gradients.
std::vector<std::int64_t> active_select(const CandidatePool& pool, const KeyDictionary& dict,
                                        const Matrix& query_batch,
                                        const std::vector<ForwardCache>& query_caches,
                                        std::size_t M, Rng& rng,
                                        std::vector<double>* selected_grad_norms = nullptr);

// Diversity-only variant seeding over the raw key embeddings.
std::vector<std::int64_t> feature_select(const CandidatePool& pool, const KeyDictionary& dict,
                                         std::size_t M, Rng& rng);

// Uniform without replacement over pool candidates outside the dictionary.
std::vector<std::int64_t> random_select(const CandidatePool& pool, const KeyDictionary& dict,
                                        std::size_t M, Rng& rng);

// Online hard example mining: the M candidates with the highest pseudo-label
// cross-entropy, deterministic with lowest-id tie-break.
std::vector<std::int64_t> ohem_select(const CandidatePool& pool, const KeyDictionary& dict,
                                      const Matrix& query_batch, std::size_t M);

}  // namespace acc
