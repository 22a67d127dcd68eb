#include "acc/data.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "acc/binio.hpp"
#include "acc/rng.hpp"

namespace acc {

void MiSpec::validate() const {
    if (alphabet_sizes.empty()) throw std::invalid_argument("MiSpec: no alphabets");
    for (int l : alphabet_sizes) {
        if (l < 2) throw std::invalid_argument("MiSpec: alphabet sizes must be >= 2");
    }
    if (slot_dim < 1) throw std::invalid_argument("MiSpec: slot_dim must be >= 1");
    if (noise_sigma < 0.0) throw std::invalid_argument("MiSpec: noise_sigma must be >= 0");
    if (dataset_size < 1) throw std::invalid_argument("MiSpec: dataset_size must be >= 1");
}

double mutual_information(const MiSpec& spec) {
    double mi = 0.0;
    for (int l : spec.alphabet_sizes) mi += std::log(static_cast<double>(l));
    return mi;
}

std::uint64_t category_count(const MiSpec& spec) {
    if (spec.coarse_labels) return static_cast<std::uint64_t>(spec.alphabet_sizes.front());
    std::uint64_t n = 1;
    for (int l : spec.alphabet_sizes) n *= static_cast<std::uint64_t>(l);
    return n;
}

const std::vector<int>& default_alphabets() {
    static const std::vector<int> sizes = {55, 52, 48, 47, 46, 43, 42, 41, 41};
    return sizes;
}

namespace {

// One codebook per (modality, slot): alphabet_size x slot_dim rows of
// N(0, 1/slot_dim) entries, so each code vector has unit expected norm.
std::vector<Matrix> make_codebooks(const MiSpec& spec, Rng& rng) {
    std::vector<Matrix> books;
    books.reserve(spec.alphabet_sizes.size());
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.slot_dim));
    for (int l : spec.alphabet_sizes) {
        Matrix book(static_cast<std::size_t>(l), static_cast<std::size_t>(spec.slot_dim));
        for (double& v : book.data) v = rng.next_normal() * scale;
        books.push_back(std::move(book));
    }
    return books;
}

}  // namespace

PairedDataset generate(const MiSpec& spec) {
    spec.validate();
    const std::size_t slots = spec.alphabet_sizes.size();
    const std::size_t dim = spec.input_dim();

    Rng codebook_rng(derive_stream_seed(spec.seed, 101));
    Rng tuple_rng(derive_stream_seed(spec.seed, 102));
    Rng noise_rng(derive_stream_seed(spec.seed, 103));

    const std::vector<Matrix> visual_books = make_codebooks(spec, codebook_rng);
    const std::vector<Matrix> audio_books = make_codebooks(spec, codebook_rng);

    PairedDataset ds;
    ds.spec = spec;
    ds.visual = Matrix(spec.dataset_size, dim);
    ds.audio = Matrix(spec.dataset_size, dim);
    ds.labels.resize(spec.dataset_size);

    std::vector<int> tuple(slots);
    for (std::size_t i = 0; i < spec.dataset_size; ++i) {
        for (std::size_t s = 0; s < slots; ++s) {
            tuple[s] = static_cast<int>(tuple_rng.next_below(
                static_cast<std::size_t>(spec.alphabet_sizes[s])));
        }
        double* vrow = ds.visual.row(i);
        double* arow = ds.audio.row(i);
        for (std::size_t s = 0; s < slots; ++s) {
            const int partner = (tuple[s] + 1) % spec.alphabet_sizes[s];
            const double* vcode = visual_books[s].row(static_cast<std::size_t>(tuple[s]));
            const double* acode = audio_books[s].row(static_cast<std::size_t>(partner));
            double* v = vrow + s * static_cast<std::size_t>(spec.slot_dim);
            double* a = arow + s * static_cast<std::size_t>(spec.slot_dim);
            for (int d = 0; d < spec.slot_dim; ++d) {
                v[d] = vcode[d] + spec.noise_sigma * noise_rng.next_normal();
                a[d] = acode[d] + spec.noise_sigma * noise_rng.next_normal();
            }
        }
        if (spec.coarse_labels) {
            ds.labels[i] = static_cast<std::uint64_t>(tuple[0]);
        } else {
            // Mixed-radix tuple index, first slot least significant.
            std::uint64_t label = 0;
            std::uint64_t radix = 1;
            for (std::size_t s = 0; s < slots; ++s) {
                label += static_cast<std::uint64_t>(tuple[s]) * radix;
                radix *= static_cast<std::uint64_t>(spec.alphabet_sizes[s]);
            }
            ds.labels[i] = label;
        }
    }
    return ds;
}

MiniBatch minibatch(const PairedDataset& dataset, const std::vector<std::size_t>& indices) {
    MiniBatch batch;
    batch.indices = indices;
    batch.visual = Matrix(indices.size(), dataset.visual.cols);
    batch.audio = Matrix(indices.size(), dataset.audio.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= dataset.size()) {
            throw std::out_of_range("minibatch: index out of range");
        }
        batch.visual.set_row(i, dataset.visual.row_vec(indices[i]));
        batch.audio.set_row(i, dataset.audio.row_vec(indices[i]));
    }
    return batch;
}

namespace {

constexpr char kDatasetMagic[8] = {'A', 'C', 'C', 'D', 'S', 'E', 'T', '1'};

void write_matrix(std::ostream& os, const Matrix& m) {
    binio::write_u64(os, m.rows);
    binio::write_u64(os, m.cols);
    binio::write_f64_span(os, m.data.data(), m.data.size());
}

Matrix read_matrix(std::istream& is) {
    Matrix m(binio::read_u64(is), 0);
    m.cols = binio::read_u64(is);
    m.data.resize(m.rows * m.cols);
    binio::read_f64_span(is, m.data.data(), m.data.size());
    return m;
}

}  // namespace

void save_dataset(const PairedDataset& dataset, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
    binio::write_magic(os, kDatasetMagic);
    binio::write_u32(os, 1);  // version
    binio::write_u64(os, dataset.spec.alphabet_sizes.size());
    for (int l : dataset.spec.alphabet_sizes) binio::write_u32(os, static_cast<std::uint32_t>(l));
    binio::write_u32(os, static_cast<std::uint32_t>(dataset.spec.slot_dim));
    binio::write_f64(os, dataset.spec.noise_sigma);
    binio::write_u64(os, dataset.spec.dataset_size);
    binio::write_u64(os, dataset.spec.seed);
    binio::write_u32(os, dataset.spec.coarse_labels ? 1 : 0);
    write_matrix(os, dataset.visual);
    write_matrix(os, dataset.audio);
    binio::write_u64(os, dataset.labels.size());
    binio::write_u64_span(os, dataset.labels.data(), dataset.labels.size());
    if (!os) throw std::runtime_error("save_dataset: write failed for " + path);
}

PairedDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
    binio::expect_magic(is, kDatasetMagic, "load_dataset");
    const std::uint32_t version = binio::read_u32(is);
    if (version != 1) throw std::runtime_error("load_dataset: unsupported version");
    PairedDataset ds;
    const std::uint64_t slots = binio::read_u64(is);
    ds.spec.alphabet_sizes.resize(slots);
    for (auto& l : ds.spec.alphabet_sizes) l = static_cast<int>(binio::read_u32(is));
    ds.spec.slot_dim = static_cast<int>(binio::read_u32(is));
    ds.spec.noise_sigma = binio::read_f64(is);
    ds.spec.dataset_size = binio::read_u64(is);
    ds.spec.seed = binio::read_u64(is);
    ds.spec.coarse_labels = binio::read_u32(is) != 0;
    ds.visual = read_matrix(is);
    ds.audio = read_matrix(is);
    ds.labels.resize(binio::read_u64(is));
    binio::read_u64_span(is, ds.labels.data(), ds.labels.size());
    return ds;
}

}  // namespace acc
