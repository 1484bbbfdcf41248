#include "digits.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "sculpt/rng.hpp"

namespace sculpt::testing {

namespace fs = std::filesystem;

namespace {

// Segment endpoints in a unit box (x right, y down): a b c d e f g.
constexpr std::array<std::array<double, 4>, 7> kSegments{{
    {0, 0, 1, 0},      // a top
    {1, 0, 1, 0.5},    // b upper right
    {1, 0.5, 1, 1},    // c lower right
    {0, 1, 1, 1},      // d bottom
    {0, 0.5, 0, 1},    // e lower left
    {0, 0, 0, 0.5},    // f upper left
    {0, 0.5, 1, 0.5},  // g middle
}};

// Bit i set: segment i lit.
constexpr std::array<unsigned, 10> kDigits{0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
                                           0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111};

double segment_distance(double px, double py, double x0, double y0, double x1, double y1) {
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = px - (x0 + t * dx), ey = py - (y0 + t * dy);
    return std::sqrt(ex * ex + ey * ey);
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_open01(rng); }

}  // namespace

Dataset make_synthetic_digits(std::size_t n, std::uint64_t seed) {
    constexpr std::size_t H = 28, W = 28;
    std::vector<double> pixels(n * H * W, 0.0);
    std::vector<int> labels(n);
    Rng rng = make_rng(seed, "synthetic_digits");
    std::vector<std::array<double, 4>> strokes;
    for (std::size_t s = 0; s < n; ++s) {
        const int label = static_cast<int>(s % 10);
        labels[s] = label;
        const double w = 10.0 * uniform(rng, 0.9, 1.1);
        const double h = 16.0 * uniform(rng, 0.9, 1.1);
        const double cx = 14.0 + uniform(rng, -1.5, 1.5);
        const double cy = 14.0 + uniform(rng, -1.5, 1.5);
        const double slant = uniform(rng, -0.25, 0.25);
        const double width = uniform(rng, 1.2, 2.2);
        auto map = [&](double ux, double uy, double& x, double& y) {
            y = cy + (uy - 0.5) * h;
            x = cx + (ux - 0.5) * w - slant * (uy - 0.5) * h;
        };
        strokes.clear();
        for (std::size_t seg = 0; seg < 7; ++seg) {
            const bool lit = (kDigits[static_cast<std::size_t>(label)] >> seg) & 1U;
            const bool dropped = uniform_open01(rng) < 0.03;
            if (!lit || dropped) continue;
            std::array<double, 4> st{};
            map(kSegments[seg][0], kSegments[seg][1], st[0], st[1]);
            map(kSegments[seg][2], kSegments[seg][3], st[2], st[3]);
            strokes.push_back(st);
        }
        if (uniform_open01(rng) < 0.2) {
            strokes.push_back({uniform(rng, 2, 26), uniform(rng, 2, 26), uniform(rng, 2, 26), uniform(rng, 2, 26)});
        }
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t c = 0; c < W; ++c) {
                double d = 1e9;
                for (const auto& st : strokes) {
                    d = std::min(d, segment_distance(static_cast<double>(c), static_cast<double>(r), st[0], st[1], st[2],
                                                     st[3]));
                }
                double v = std::clamp(1.5 - d / width, 0.0, 1.0);
                if (v > 0.0) v = std::clamp(v * (1.0 + 0.15 * standard_normal(rng)), 0.0, 1.0);
                pixels[(s * H + r) * W + c] = std::round(v * 255.0) / 255.0;
            }
        }
    }
    // Interleaved labels would make every prefix balanced; shuffle to look like real data.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    Dataset d;
    std::vector<double> shuffled(pixels.size());
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(order[i] * H * W), H * W,
                    shuffled.begin() + static_cast<std::ptrdiff_t>(i * H * W));
        d.labels[i] = labels[order[i]];
    }
    d.inputs = Tensor(Shape{n, H, W, 1}, std::move(shuffled));
    d.classes = 10;
    d.provenance = "synthetic seven-segment digits, seed " + std::to_string(seed);
    return d;
}

IdxFiles digit_idx_files(const fs::path& dir, std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
    if (const char* env = std::getenv("SCULPT_MNIST_DIR"); env && *env) {
        const fs::path root(env);
        IdxFiles f{root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte", root / "t10k-images-idx3-ubyte",
                   root / "t10k-labels-idx1-ubyte", "MNIST from " + root.string()};
        if (fs::exists(f.train_images) && fs::exists(f.train_labels) && fs::exists(f.test_images) &&
            fs::exists(f.test_labels)) {
            return f;
        }
    }
    fs::create_directories(dir);
    IdxFiles f{dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", dir / "t10k-images-idx3-ubyte",
               dir / "t10k-labels-idx1-ubyte", "synthetic digits (seed " + std::to_string(seed) + ")"};
    write_idx(make_synthetic_digits(n_train, derive_seed(seed, "digits_train")), f.train_images, f.train_labels);
    write_idx(make_synthetic_digits(n_test, derive_seed(seed, "digits_test")), f.test_images, f.test_labels);
    return f;
}

fs::path scratch_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("sculpt_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace sculpt::testing
