#include "promptrr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "promptrr/image_io.hpp"

namespace promptrr {
namespace {

namespace fs = std::filesystem;

int reflect_index(int i, int n) {
    // mirror without repeating the edge sample: -1 -> 1, n -> n-2
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

std::string pair_name(int index, const char* kind) {
    char name[64];
    std::snprintf(name, sizeof(name), "%04d_%s.ppm", index, kind);
    return name;
}

std::string pair_path(const std::string& dir, int index, const char* kind) {
    return (fs::path(dir) / "pairs" / pair_name(index, kind)).string();
}

// Accepts both the generated layout (dir/pairs/...) and a flat user folder.
std::string find_pair_file(const std::string& dir, int index, const char* kind) {
    const std::string nested = pair_path(dir, index, kind);
    if (fs::exists(nested)) return nested;
    return (fs::path(dir) / pair_name(index, kind)).string();
}

}  // namespace

std::vector<double> gaussian_kernel(int size, double sigma) {
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("gaussian_kernel: size must be odd and positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    std::vector<double> k(static_cast<std::size_t>(size) * size);
    const int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const double dy = i - half, dx = j - half;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            k[static_cast<std::size_t>(i) * size + j] = v;
            sum += v;
        }
    }
    for (double& v : k) v /= sum;
    return k;
}

Tensor reflect_conv(const Tensor& x, const std::vector<double>& kernel, int size) {
    if (x.ndim() != 3) throw TensorError("reflect_conv: expected [C x H x W], got " + shape_str(x.shape()));
    if (static_cast<int>(kernel.size()) != size * size)
        throw std::invalid_argument("reflect_conv: kernel size mismatch");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int half = size / 2;
    Tensor out = Tensor::zeros(x.shape());
    auto xd = x.data();
    auto od = out.data();
    for (int ch = 0; ch < c; ++ch) {
        const std::size_t plane = static_cast<std::size_t>(ch) * h * w;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                double acc = 0.0;
                for (int u = 0; u < size; ++u) {
                    const int ri = reflect_index(i + u - half, h);
                    for (int v = 0; v < size; ++v) {
                        const int rj = reflect_index(j + v - half, w);
                        acc += kernel[static_cast<std::size_t>(u) * size + v] *
                               xd[plane + static_cast<std::size_t>(ri) * w + rj];
                    }
                }
                od[plane + static_cast<std::size_t>(i) * w + j] = static_cast<float>(acc);
            }
        }
    }
    return out;
}

ImagePair synthesize(const Tensor& b, const Tensor& r, const SynthSpec& spec, Rng& rng) {
    if (b.shape() != r.shape()) throw TensorError("synthesize: shape mismatch");
    if (b.ndim() != 3 || b.dim(0) != 3)
        throw TensorError("synthesize: expected [3 x H x W], got " + shape_str(b.shape()));
    if (spec.kernel_size < 1 || spec.kernel_size % 2 == 0)
        throw std::invalid_argument("synthesize: kernel_size must be odd");

    const double sigma = rng.uniform(spec.sigma_min, spec.sigma_max);
    const double w = rng.uniform(spec.weight_min, spec.weight_max);
    const std::vector<double> k = gaussian_kernel(spec.kernel_size, sigma);

    const Tensor blurred = reflect_conv(r, k, spec.kernel_size);

    ImagePair pair;
    pair.gt_b = b;
    pair.reflection_r = r;
    pair.weight = static_cast<float>(w);
    pair.kernel = Tensor::zeros({spec.kernel_size, spec.kernel_size});
    auto kd = pair.kernel.data();
    for (std::size_t i = 0; i < k.size(); ++i) kd[i] = static_cast<float>(k[i]);

    pair.input_q = Tensor::zeros(b.shape());
    auto bd = b.data();
    auto rd = blurred.data();
    auto qd = pair.input_q.data();
    for (int i = 0; i < b.numel(); ++i) {
        const double q = static_cast<double>(bd[i]) + w * static_cast<double>(rd[i]);
        qd[i] = static_cast<float>(std::clamp(q, 0.0, 1.0));
    }
    return pair;
}

Tensor random_scene(int h, int w, Rng& rng) {
    if (h < 1 || w < 1) throw std::invalid_argument("random_scene: empty image");
    Tensor img = Tensor::zeros({3, h, w});
    auto d = img.data();

    for (int c = 0; c < 3; ++c) {
        const double base = rng.uniform(0.1, 0.9);
        const double gx = rng.uniform(-0.5, 0.5);
        const double gy = rng.uniform(-0.5, 0.5);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double fy = h > 1 ? static_cast<double>(i) / (h - 1) : 0.0;
                const double fx = w > 1 ? static_cast<double>(j) / (w - 1) : 0.0;
                d[(static_cast<std::size_t>(c) * h + i) * w + j] =
                    static_cast<float>(base + gx * (fx - 0.5) + gy * (fy - 0.5));
            }
        }
    }

    const int shapes = 2 + rng.uniform_int(3);
    for (int s = 0; s < shapes; ++s) {
        const bool ellipse = rng.uniform_int(2) == 1;
        double color[3];
        for (double& v : color) v = rng.uniform();
        const double alpha = rng.uniform(0.4, 0.9);
        const double cy = rng.uniform(0.0, h);
        const double cx = rng.uniform(0.0, w);
        const double ry = rng.uniform(0.1, 0.35) * h;
        const double rx = rng.uniform(0.1, 0.35) * w;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                bool inside;
                if (ellipse) {
                    const double dy = (i - cy) / std::max(ry, 1e-9);
                    const double dx = (j - cx) / std::max(rx, 1e-9);
                    inside = dy * dy + dx * dx <= 1.0;
                } else {
                    inside = std::abs(i - cy) <= ry && std::abs(j - cx) <= rx;
                }
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) {
                    float& v = d[(static_cast<std::size_t>(c) * h + i) * w + j];
                    v = static_cast<float>((1.0 - alpha) * v + alpha * color[c]);
                }
            }
        }
    }

    for (int i = 0; i < img.numel(); ++i) d[i] = std::clamp(d[i], 0.f, 1.f);
    return img;
}

void write_pair_dataset(const std::string& dir, int count, int h, int w, const SynthSpec& spec,
                        std::uint64_t seed) {
    fs::create_directories(fs::path(dir) / "pairs");
    for (int i = 0; i < count; ++i) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
        const Tensor b = random_scene(h, w, rng);
        const Tensor r = random_scene(h, w, rng);
        const ImagePair pair = synthesize(b, r, spec, rng);
        write_ppm(pair_path(dir, i, "input"), pair.input_q);
        write_ppm(pair_path(dir, i, "gt"), pair.gt_b);
    }
}

LoadedPair load_pair(const std::string& dir, int index) {
    LoadedPair p;
    p.input_q = read_ppm(find_pair_file(dir, index, "input"));
    p.gt_b = read_ppm(find_pair_file(dir, index, "gt"));
    return p;
}

int count_pairs(const std::string& dir) {
    int n = 0;
    while (fs::exists(find_pair_file(dir, n, "input")) && fs::exists(find_pair_file(dir, n, "gt")))
        ++n;
    return n;
}

}  // namespace promptrr
