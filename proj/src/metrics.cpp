#include "promptrr/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace promptrr {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.defined() || !b.defined())
        throw TensorError(std::string(op) + ": undefined input");
    if (a.shape() != b.shape())
        throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

std::vector<double> to_gray(const Tensor& img) {
    const int h = img.dim(1), w = img.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    std::vector<double> g(plane);
    const float* d = img.data().data();
    for (std::size_t i = 0; i < plane; ++i)
        g[i] = 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
    return g;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double max_val) {
    check_pair(a, b, "psnr");
    double acc = 0.0;
    for (long i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_val * max_val / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
    check_pair(a, b, "ssim");
    if (a.ndim() != 3 || a.dim(0) != 3)
        throw TensorError("ssim: inputs must be [3 x H x W], got " + shape_str(a.shape()));
    constexpr int kWin = 11;
    const int h = a.dim(1), w = a.dim(2);
    if (h < kWin || w < kWin)
        throw TensorError("ssim: image " + shape_str(a.shape()) + " smaller than the " +
                          std::to_string(kWin) + "x" + std::to_string(kWin) + " window");

    double kernel[kWin][kWin];
    {
        const double sigma = 1.5;
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) {
                const double dy = i - kWin / 2, dx = j - kWin / 2;
                kernel[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                sum += kernel[i][j];
            }
        for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) kernel[i][j] /= sum;
    }

    const std::vector<double> x = to_gray(a);
    const std::vector<double> y = to_gray(b);
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    double total = 0.0;
    long count = 0;
    for (int i = 0; i + kWin <= h; ++i)
        for (int j = 0; j + kWin <= w; ++j) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (int u = 0; u < kWin; ++u)
                for (int v = 0; v < kWin; ++v) {
                    const double k = kernel[u][v];
                    const double xv = x[static_cast<std::size_t>((i + u) * w + j + v)];
                    const double yv = y[static_cast<std::size_t>((i + u) * w + j + v)];
                    mx += k * xv;
                    my += k * yv;
                    xx += k * xv * xv;
                    yy += k * yv * yv;
                    xy += k * xv * yv;
                }
            const double vx = xx - mx * mx;
            const double vy = yy - my * my;
            const double cxy = xy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

}  // namespace promptrr
