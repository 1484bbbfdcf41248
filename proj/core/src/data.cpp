#include "sculpt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "sculpt/errors.hpp"
#include "sculpt/rng.hpp"

namespace sculpt {

void Dataset::validate() const {
    if (labels.empty()) throw DataError("dataset '" + provenance + "' is empty");
    if (inputs.rank() < 2 || inputs.dim(0) != labels.size()) {
        throw DataError("dataset '" + provenance + "': input shape " + shape_string(inputs.shape()) +
                        " does not match " + std::to_string(labels.size()) + " labels");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw DataError("dataset '" + provenance + "': label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
        }
    }
    if (!inputs.all_finite()) throw DataError("dataset '" + provenance + "' has non-finite inputs");
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractError("make_batch: empty index set");
    const std::size_t f = data.features();
    std::vector<double> x(indices.size() * f);
    std::vector<double> y(indices.size());
    const auto src = data.inputs.data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t k = indices[i];
        if (k >= data.size()) throw ContractError("make_batch: index out of range");
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(k * f), f, x.begin() + static_cast<std::ptrdiff_t>(i * f));
        y[i] = static_cast<double>(data.labels[k]);
    }
    return Batch{Tensor({indices.size(), f}, std::move(x)), Tensor({indices.size()}, std::move(y))};
}

Batch full_batch(const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return make_batch(data, idx);
}

Dataset gen_two_moons(std::size_t n, double noise_sd, std::uint64_t seed) {
    if (n == 0 || n % 2 != 0) throw ContractError("gen_two_moons: n must be even and positive");
    const std::size_t half = n / 2;
    Rng rng = make_rng(seed, "two_moons");
    std::vector<double> x(n * 2);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < half; ++i) {
        const double t = half > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(half - 1) : 0.0;
        x[2 * i] = std::cos(t);
        x[2 * i + 1] = std::sin(t);
        y[i] = 0;
        const std::size_t j = half + i;
        x[2 * j] = 1.0 - std::cos(t);
        x[2 * j + 1] = 0.5 - std::sin(t);
        y[j] = 1;
    }
    if (noise_sd > 0.0) {
        for (double& v : x) v += noise_sd * standard_normal(rng);
    }
    Dataset d;
    d.inputs = Tensor({n, 2}, std::move(x));
    d.labels = std::move(y);
    d.classes = 2;
    d.provenance = "two_moons(n=" + std::to_string(n) + ",seed=" + std::to_string(seed) + ")";
    return d;
}

Dataset gen_gaussian_blobs(std::size_t n, const std::vector<std::vector<double>>& centers, double sd,
                           std::uint64_t seed) {
    const std::size_t k = centers.size();
    if (k < 2) throw ContractError("gen_gaussian_blobs: need at least two centers");
    if (n == 0 || n % k != 0) throw ContractError("gen_gaussian_blobs: n must be a positive multiple of #centers");
    const std::size_t dim = centers[0].size();
    for (const auto& c : centers) {
        if (c.size() != dim || dim == 0) throw ContractError("gen_gaussian_blobs: centers must share a dimension");
    }
    Rng rng = make_rng(seed, "blobs");
    std::vector<double> x(n * dim);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i / (n / k);
        y[i] = static_cast<int>(c);
        for (std::size_t j = 0; j < dim; ++j) {
            x[i * dim + j] = centers[c][j] + (sd > 0.0 ? sd * standard_normal(rng) : 0.0);
        }
    }
    Dataset d;
    d.inputs = Tensor({n, dim}, std::move(x));
    d.labels = std::move(y);
    d.classes = k;
    d.provenance = "blobs(n=" + std::to_string(n) + ",k=" + std::to_string(k) + ",seed=" + std::to_string(seed) + ")";
    return d;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw FormatError("cannot open IDX file " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::filesystem::path& p) {
    if (b.size() < off + 4) throw FormatError("truncated IDX header in " + p.string());
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = read_all(images_path);
    const auto lab = read_all(labels_path);

    if (read_be32(img, 0, images_path) != kIdxImages) throw FormatError("bad IDX image magic in " + images_path.string());
    if (read_be32(lab, 0, labels_path) != kIdxLabels) throw FormatError("bad IDX label magic in " + labels_path.string());

    const std::size_t n = read_be32(img, 4, images_path);
    const std::size_t rows = read_be32(img, 8, images_path);
    const std::size_t cols = read_be32(img, 12, images_path);
    const std::size_t nl = read_be32(lab, 4, labels_path);
    if (n == 0) throw FormatError("IDX image file " + images_path.string() + " holds zero images");
    if (n != nl) {
        throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) + " labels");
    }
    if (rows == 0 || cols == 0) throw FormatError("IDX image dimensions must be positive");
    const std::size_t pix = n * rows * cols;
    if (img.size() < 16 + pix) throw FormatError("truncated IDX image data in " + images_path.string());
    if (lab.size() < 8 + n) throw FormatError("truncated IDX label data in " + labels_path.string());

    std::vector<double> x(pix);
    for (std::size_t i = 0; i < pix; ++i) x[i] = static_cast<double>(img[16 + i]) / 255.0;
    std::vector<int> y(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = lab[8 + i];
        max_label = std::max(max_label, y[i]);
    }

    Dataset d;
    d.inputs = Tensor({n, rows, cols, 1}, std::move(x));
    d.labels = std::move(y);
    d.classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
    d.provenance = images_path.filename().string();
    return d;
}

void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
    const auto& s = data.inputs.shape();
    if (!(s.size() == 3 || (s.size() == 4 && s[3] == 1))) {
        throw ContractError("write_idx: inputs must be [n, rows, cols] or [n, rows, cols, 1]");
    }
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw FormatError("cannot create IDX files");
    put_be32(img, kIdxImages);
    put_be32(img, static_cast<std::uint32_t>(s[0]));
    put_be32(img, static_cast<std::uint32_t>(s[1]));
    put_be32(img, static_cast<std::uint32_t>(s[2]));
    for (double v : data.inputs.data()) {
        const long q = std::lround(v * 255.0);
        if (q < 0 || q > 255) throw ContractError("write_idx: pixel outside [0, 1]");
        img.put(static_cast<char>(q));
    }
    put_be32(lab, kIdxLabels);
    put_be32(lab, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) {
        if (y < 0 || y > 255) throw ContractError("write_idx: label does not fit a byte");
        lab.put(static_cast<char>(y));
    }
}

// ---------------------------------------------------------------------------
// Splits and preprocessing

namespace {

Dataset gather(const Dataset& data, std::span<const std::size_t> idx, Split split) {
    Shape shape = data.inputs.shape();
    shape[0] = idx.size();
    const std::size_t f = data.features();
    std::vector<double> x(idx.size() * f);
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(data.inputs.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * f), f,
                    x.begin() + static_cast<std::ptrdiff_t>(i * f));
        y[i] = data.labels[idx[i]];
    }
    Dataset d;
    d.inputs = Tensor(std::move(shape), std::move(x));
    d.labels = std::move(y);
    d.classes = data.classes;
    d.split = split;
    d.provenance = data.provenance;
    return d;
}

}  // namespace

TrainTest split_train_test(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ContractError("test_fraction must lie in (0, 1)");
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(seed, "split");
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::nearbyint(test_fraction * static_cast<double>(data.size())));
    if (n_test == 0 || n_test >= data.size()) throw ContractError("split leaves an empty train or test set");
    TrainTest tt;
    tt.test = gather(data, std::span(idx).first(n_test), Split::test);
    tt.train = gather(data, std::span(idx).subspan(n_test), Split::train);
    return tt;
}

Dataset take(const Dataset& data, std::size_t n) {
    if (n == 0 || n > data.size()) throw ContractError("take: n outside [1, size]");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return gather(data, idx, data.split);
}

Standardizer fit_standardizer(const Dataset& train) {
    const std::size_t n = train.size(), f = train.features();
    Standardizer s{std::vector<double>(f, 0.0), std::vector<double>(f, 0.0)};
    const auto x = train.inputs.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) s.mean[j] += x[i * f + j];
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < f; ++j) {
            const double d = x[i * f + j] - s.mean[j];
            s.sd[j] += d * d;
        }
    for (double& v : s.sd) v = std::sqrt(v / static_cast<double>(n));
    return s;
}

void Standardizer::apply(Dataset& data) const {
    const std::size_t f = data.features();
    if (f != mean.size()) throw ContractError("standardizer fitted on a different feature count");
    auto x = data.inputs.data();
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t j = 0; j < f; ++j) {
            double& v = x[i * f + j];
            v -= mean[j];
            if (sd[j] > 1e-12) v /= sd[j];
        }
}

}  // namespace sculpt
