#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace acc {

// Deterministic random source. All randomness in the engine flows through
// this class so that a (seed, stream) pair fully determines every draw;
// distribution sampling is hand-rolled instead of using std:: distributions,
// whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), unbiased via rejection. n must be > 0.
    std::size_t next_below(std::size_t n);

    // Standard normal via Box-Muller; caches the spare deviate.
    double next_normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n), in random order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Independent per-purpose streams derived from one user seed. Keeping streams
// separate means consuming randomness for one purpose (say, pool reloads)
// never shifts the draws of another (batch order), which is what makes the
// active and baseline loops comparable under a shared seed.
struct RngStreams {
    Rng params;
    Rng dictionary;
    Rng data_order;
    Rng pool;
    Rng sampler;

    explicit RngStreams(std::uint64_t seed);
};

std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream_id);

}  // namespace acc
