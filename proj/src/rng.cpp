#include "acc/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace acc {

std::size_t Rng::next_below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::next_below: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

double Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw std::invalid_argument("Rng::sample_without_replacement: k > n");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first k slots end up uniform without replacement.
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + next_below(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream_id) {
    // splitmix64 over (seed, stream_id); decorrelates streams of nearby seeds.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RngStreams::RngStreams(std::uint64_t seed)
    : params(derive_stream_seed(seed, 0)),
      dictionary(derive_stream_seed(seed, 1)),
      data_order(derive_stream_seed(seed, 2)),
      pool(derive_stream_seed(seed, 3)),
      sampler(derive_stream_seed(seed, 4)) {}

}  // namespace acc
