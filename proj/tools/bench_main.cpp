// Benchmark comparing the serial reference kernels against the OpenMP
// versions: batch query encoding and candidate gradient scoring. Prints one
// CSV-ish line per case with wall times, speedup and the max elementwise
// difference (which must be zero: the parallel kernels are exact).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "acc/data.hpp"
#include "acc/encoders.hpp"
#include "acc/parallel.hpp"
#include "acc/sampling.hpp"

using namespace acc;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_ms(F&& fn, int reps) {
    // One warm-up, then best of reps.
    fn();
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        fn();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    int threads = thread_count();
    if (argc > 1) threads = std::stoi(argv[1]);

    Rng rng(7);
    BundleConfig bc;
    bc.visual_input_dim = 48;
    bc.audio_input_dim = 48;
    bc.hidden_dim = 64;
    bc.embed_dim = 32;
    EncoderBundle bundle = make_bundle(bc, rng);

    std::printf("kernel,size,serial_ms,parallel_ms,speedup,max_abs_diff\n");

    for (std::size_t rows : {256u, 1024u, 4096u}) {
        Matrix batch(rows, 48);
        for (double& v : batch.data) v = rng.next_normal();

        set_thread_count(1);
        Matrix serial_keys;
        const double t_serial =
            time_ms([&] { serial_keys = encode_key_serial(bundle, Modality::visual, batch); }, 3);
        set_thread_count(threads);
        Matrix parallel_keys;
        const double t_parallel =
            time_ms([&] { parallel_keys = encode_key(bundle, Modality::visual, batch); }, 3);
        std::printf("encode_key,%zu,%.3f,%.3f,%.2f,%.3g\n", rows, t_serial, t_parallel,
                    t_serial / t_parallel, max_abs_diff(serial_keys, parallel_keys));
    }

    // Candidate scoring: gradient embeddings of a pool against a query batch.
    const std::size_t M = 128;
    Matrix query_inputs(M, 48);
    for (double& v : query_inputs.data) v = rng.next_normal();
    const BatchEncoding queries = encode_query(bundle, Modality::audio, query_inputs);

    for (std::size_t cands : {512u, 2048u, 8192u}) {
        Matrix pool_inputs(cands, 48);
        for (double& v : pool_inputs.data) v = rng.next_normal();
        const Matrix pool_keys = encode_key(bundle, Modality::visual, pool_inputs);
        std::vector<std::size_t> all_rows(cands);
        for (std::size_t i = 0; i < cands; ++i) all_rows[i] = i;

        set_thread_count(1);
        std::vector<GradientEmbedding> serial_grads;
        const double t_serial = time_ms(
            [&] {
                serial_grads = gradient_embeddings_serial(pool_keys, all_rows,
                                                          queries.embeddings, queries.caches);
            },
            3);
        set_thread_count(threads);
        std::vector<GradientEmbedding> parallel_grads;
        const double t_parallel = time_ms(
            [&] {
                parallel_grads = gradient_embeddings(pool_keys, all_rows, queries.embeddings,
                                                     queries.caches);
            },
            3);
        double worst = 0.0;
        for (std::size_t i = 0; i < cands; ++i) {
            worst = std::max(worst, std::abs(std::sqrt(serial_grads[i].norm_sq()) -
                                             std::sqrt(parallel_grads[i].norm_sq())));
        }
        std::printf("gradient_scoring,%zu,%.3f,%.3f,%.2f,%.3g\n", cands, t_serial, t_parallel,
                    t_serial / t_parallel, worst);
    }

    set_thread_count(0);
    return 0;
}
