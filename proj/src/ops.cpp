#include "promptrr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

namespace promptrr {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw TensorError(msg);
}

// y += a * x
inline void axpy(float* y, float a, const float* x, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

// Eight independent accumulation lanes combined in a fixed order at the
// end: deterministic, and wide enough to vectorize without reassociation.
inline float dot8(const float* a, const float* b, int n) {
    float acc[8] = {0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    for (; i < n; ++i) acc[i & 7] += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// 64-bit accumulation for reductions that feed losses / statistics.
inline double dsum(const float* x, int n) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    int i = 0;
    for (; i + 4 <= n; i += 4)
        for (int l = 0; l < 4; ++l) acc[l] += static_cast<double>(x[i + l]);
    for (; i < n; ++i) acc[i & 3] += static_cast<double>(x[i]);
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline double ddot(const float* a, const float* b, int n) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    int i = 0;
    for (; i + 4 <= n; i += 4)
        for (int l = 0; l < 4; ++l)
            acc[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
    for (; i < n; ++i) acc[i & 3] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

void check_chw(const Tensor& x, const char* op) {
    require(x.defined() && x.ndim() == 3,
            std::string(op) + ": expected a [C x H x W] input, got " +
                (x.defined() ? shape_str(x.shape()) : std::string("<undefined>")));
}

struct AxisSplit {
    int outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
    require(axis >= 0 && axis < static_cast<int>(shape.size()),
            std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                shape_str(shape));
    AxisSplit s{1, shape[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i)
        s.inner *= shape[static_cast<std::size_t>(i)];
    return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.defined() && b.defined() && a.ndim() == 2 && b.ndim() == 2,
            "matmul: expected two rank-2 tensors");
    require(a.dim(1) == b.dim(0),
            "matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const bool rec = recording({&a, &b});
    Tensor out = Tensor::zeros({m, n}, rec);
    const float* ad = a.data().data();
    const float* bd = b.data().data();
    float* od = out.data().data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) axpy(od + i * n, ad[i * k + p], bd + p * n, n);
    if (rec) {
        GradTape::active()->record(out, [a = a, b = b, out = out, m, k, n]() mutable {
            const float* g = out.grad().data();
            const float* ad = a.data().data();
            const float* bd = b.data().data();
            if (a.requires_grad()) {
                float* da = a.grad().data();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) da[i * k + p] += dot8(g + i * n, bd + p * n, n);
            }
            if (b.requires_grad()) {
                float* db = b.grad().data();
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) axpy(db + p * n, ad[i * k + p], g + i * n, n);
            }
        });
    }
    return out;
}

Tensor transpose2d(const Tensor& x) {
    require(x.defined() && x.ndim() == 2, "transpose2d: expected a rank-2 tensor");
    const int m = x.dim(0), n = x.dim(1);
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros({n, m}, rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) od[j * m + i] = xd[i * n + j];
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, m, n]() mutable {
            if (!x.requires_grad()) return;
            const float* g = out.grad().data();
            float* dx = x.grad().data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) dx[i * n + j] += g[j * m + i];
        });
    }
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    require(x.defined(), "softmax: undefined input");
    const AxisSplit s = split_axis(x.shape(), axis, "softmax");
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros(x.shape(), rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    std::vector<float> mx(static_cast<std::size_t>(s.inner));
    std::vector<double> acc(static_cast<std::size_t>(s.inner));
    for (int o = 0; o < s.outer; ++o) {
        const int base = o * s.n * s.inner;
        std::fill(mx.begin(), mx.end(), -std::numeric_limits<float>::infinity());
        for (int j = 0; j < s.n; ++j) {
            const float* row = xd + base + j * s.inner;
            for (int i = 0; i < s.inner; ++i) mx[i] = std::max(mx[i], row[i]);
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int j = 0; j < s.n; ++j) {
            const float* row = xd + base + j * s.inner;
            float* orow = od + base + j * s.inner;
            for (int i = 0; i < s.inner; ++i) {
                const float e = std::exp(row[i] - mx[i]);
                orow[i] = e;
                acc[i] += static_cast<double>(e);
            }
        }
        for (int j = 0; j < s.n; ++j) {
            float* orow = od + base + j * s.inner;
            for (int i = 0; i < s.inner; ++i)
                orow[i] = static_cast<float>(static_cast<double>(orow[i]) / acc[i]);
        }
    }
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, s]() mutable {
            if (!x.requires_grad()) return;
            const float* g = out.grad().data();
            const float* y = out.data().data();
            float* dx = x.grad().data();
            std::vector<double> dot(static_cast<std::size_t>(s.inner));
            for (int o = 0; o < s.outer; ++o) {
                const int base = o * s.n * s.inner;
                std::fill(dot.begin(), dot.end(), 0.0);
                for (int j = 0; j < s.n; ++j) {
                    const float* yr = y + base + j * s.inner;
                    const float* gr = g + base + j * s.inner;
                    for (int i = 0; i < s.inner; ++i)
                        dot[i] += static_cast<double>(yr[i]) * static_cast<double>(gr[i]);
                }
                for (int j = 0; j < s.n; ++j) {
                    const float* yr = y + base + j * s.inner;
                    const float* gr = g + base + j * s.inner;
                    float* dr = dx + base + j * s.inner;
                    for (int i = 0; i < s.inner; ++i)
                        dr[i] += yr[i] * (gr[i] - static_cast<float>(dot[i]));
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps, int axis) {
    require(x.defined() && gain.defined() && bias.defined(), "layer_norm: undefined input");
    const AxisSplit s = split_axis(x.shape(), axis, "layer_norm");
    require(gain.numel() == s.n && bias.numel() == s.n,
            "layer_norm: gain/bias must have " + std::to_string(s.n) + " elements, got " +
                shape_str(gain.shape()) + " / " + shape_str(bias.shape()));
    const bool rec = recording({&x, &gain, &bias});
    Tensor out = Tensor::zeros(x.shape(), rec);
    const float* xd = x.data().data();
    const float* gd = gain.data().data();
    const float* bd = bias.data().data();
    float* od = out.data().data();
    const std::size_t stats = static_cast<std::size_t>(s.outer) * static_cast<std::size_t>(s.inner);
    std::vector<float> mu(stats), inv(stats);
    std::vector<double> acc(static_cast<std::size_t>(s.inner));
    for (int o = 0; o < s.outer; ++o) {
        const int base = o * s.n * s.inner;
        float* muo = mu.data() + static_cast<std::size_t>(o) * s.inner;
        float* invo = inv.data() + static_cast<std::size_t>(o) * s.inner;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int j = 0; j < s.n; ++j) {
            const float* row = xd + base + j * s.inner;
            for (int i = 0; i < s.inner; ++i) acc[i] += static_cast<double>(row[i]);
        }
        for (int i = 0; i < s.inner; ++i) muo[i] = static_cast<float>(acc[i] / s.n);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int j = 0; j < s.n; ++j) {
            const float* row = xd + base + j * s.inner;
            for (int i = 0; i < s.inner; ++i) {
                const float d = row[i] - muo[i];
                acc[i] += static_cast<double>(d) * static_cast<double>(d);
            }
        }
        for (int i = 0; i < s.inner; ++i)
            invo[i] = static_cast<float>(1.0 / std::sqrt(acc[i] / s.n + static_cast<double>(eps)));
        for (int j = 0; j < s.n; ++j) {
            const float* row = xd + base + j * s.inner;
            float* orow = od + base + j * s.inner;
            const float gj = gd[j], bj = bd[j];
            for (int i = 0; i < s.inner; ++i) orow[i] = gj * ((row[i] - muo[i]) * invo[i]) + bj;
        }
    }
    if (rec) {
        GradTape::active()->record(
            out, [x = x, gain = gain, bias = bias, out = out, s, mu = std::move(mu),
             inv = std::move(inv)]() mutable {
                const float* g = out.grad().data();
                const float* xd = x.data().data();
                const float* gd = gain.data().data();
                std::vector<double> dgain(static_cast<std::size_t>(s.n), 0.0);
                std::vector<double> dbias(static_cast<std::size_t>(s.n), 0.0);
                std::vector<double> am(static_cast<std::size_t>(s.inner));
                std::vector<double> bm(static_cast<std::size_t>(s.inner));
                const bool want_x = x.requires_grad();
                float* dx = want_x ? x.grad().data() : nullptr;
                for (int o = 0; o < s.outer; ++o) {
                    const int base = o * s.n * s.inner;
                    const float* muo = mu.data() + static_cast<std::size_t>(o) * s.inner;
                    const float* invo = inv.data() + static_cast<std::size_t>(o) * s.inner;
                    std::fill(am.begin(), am.end(), 0.0);
                    std::fill(bm.begin(), bm.end(), 0.0);
                    for (int j = 0; j < s.n; ++j) {
                        const float* row = xd + base + j * s.inner;
                        const float* gr = g + base + j * s.inner;
                        const float gj = gd[j];
                        for (int i = 0; i < s.inner; ++i) {
                            const float xh = (row[i] - muo[i]) * invo[i];
                            const float gg = gj * gr[i];
                            am[i] += static_cast<double>(gg);
                            bm[i] += static_cast<double>(gg) * static_cast<double>(xh);
                            dgain[static_cast<std::size_t>(j)] +=
                                static_cast<double>(gr[i]) * static_cast<double>(xh);
                            dbias[static_cast<std::size_t>(j)] += static_cast<double>(gr[i]);
                        }
                    }
                    if (want_x) {
                        for (int i = 0; i < s.inner; ++i) {
                            am[i] /= s.n;
                            bm[i] /= s.n;
                        }
                        for (int j = 0; j < s.n; ++j) {
                            const float* row = xd + base + j * s.inner;
                            const float* gr = g + base + j * s.inner;
                            float* dr = dx + base + j * s.inner;
                            const float gj = gd[j];
                            for (int i = 0; i < s.inner; ++i) {
                                const float xh = (row[i] - muo[i]) * invo[i];
                                const float gg = gj * gr[i];
                                dr[i] += invo[i] * (gg - static_cast<float>(am[i]) -
                                                    xh * static_cast<float>(bm[i]));
                            }
                        }
                    }
                }
                if (gain.requires_grad()) {
                    float* dg = gain.grad().data();
                    for (int j = 0; j < s.n; ++j)
                        dg[j] += static_cast<float>(dgain[static_cast<std::size_t>(j)]);
                }
                if (bias.requires_grad()) {
                    float* db = bias.grad().data();
                    for (int j = 0; j < s.n; ++j)
                        db[j] += static_cast<float>(dbias[static_cast<std::size_t>(j)]);
                }
            });
    }
    return out;
}

Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_chw(x, "conv1x1");
    require(w.defined() && w.ndim() == 2, "conv1x1: weight must be [Cout x Cin]");
    const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int co = w.dim(0);
    require(w.dim(1) == ci, "conv1x1: weight " + shape_str(w.shape()) + " does not match input " +
                                shape_str(x.shape()));
    if (b.defined())
        require(b.numel() == co, "conv1x1: bias " + shape_str(b.shape()) + " must have " +
                                     std::to_string(co) + " elements");
    const int hw = h * wd;
    const bool rec = b.defined() ? recording({&x, &w, &b}) : recording({&x, &w});
    Tensor out = Tensor::zeros({co, h, wd}, rec);
    const float* xd = x.data().data();
    const float* wdt = w.data().data();
    float* od = out.data().data();
    for (int o = 0; o < co; ++o) {
        float* orow = od + o * hw;
        if (b.defined()) std::fill(orow, orow + hw, b.data()[static_cast<std::size_t>(o)]);
        for (int c = 0; c < ci; ++c) axpy(orow, wdt[o * ci + c], xd + c * hw, hw);
    }
    if (rec) {
        GradTape::active()->record(out, [x = x, w = w, b = b, out = out, ci, co, hw]() mutable {
            const float* g = out.grad().data();
            const float* xd = x.data().data();
            const float* wdt = w.data().data();
            if (x.requires_grad()) {
                float* dx = x.grad().data();
                for (int o = 0; o < co; ++o)
                    for (int c = 0; c < ci; ++c) axpy(dx + c * hw, wdt[o * ci + c], g + o * hw, hw);
            }
            if (w.requires_grad()) {
                float* dw = w.grad().data();
                for (int o = 0; o < co; ++o)
                    for (int c = 0; c < ci; ++c) dw[o * ci + c] += dot8(g + o * hw, xd + c * hw, hw);
            }
            if (b.defined() && b.requires_grad()) {
                float* db = b.grad().data();
                for (int o = 0; o < co; ++o) db[o] += static_cast<float>(dsum(g + o * hw, hw));
            }
        });
    }
    return out;
}

Tensor dwconv3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_chw(x, "dwconv3x3");
    require(w.defined() && w.ndim() == 3 && w.dim(1) == 3 && w.dim(2) == 3,
            "dwconv3x3: weight must be [C x 3 x 3]");
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    require(w.dim(0) == c, "dwconv3x3: weight " + shape_str(w.shape()) +
                               " does not match input " + shape_str(x.shape()));
    if (b.defined())
        require(b.numel() == c, "dwconv3x3: bias must have " + std::to_string(c) + " elements");
    const bool rec = b.defined() ? recording({&x, &w, &b}) : recording({&x, &w});
    Tensor out = Tensor::zeros({c, h, wd}, rec);
    const float* xd = x.data().data();
    const float* wdt = w.data().data();
    float* od = out.data().data();
    for (int ch = 0; ch < c; ++ch) {
        const float* xp = xd + ch * h * wd;
        float* op = od + ch * h * wd;
        if (b.defined()) std::fill(op, op + h * wd, b.data()[static_cast<std::size_t>(ch)]);
        for (int ky = 0; ky < 3; ++ky) {
            const int dy = ky - 1;
            const int y0 = std::max(0, -dy), y1 = h - std::max(0, dy);
            for (int kx = 0; kx < 3; ++kx) {
                const int dx = kx - 1;
                const int x0 = std::max(0, -dx), x1 = wd - std::max(0, dx);
                const float wv = wdt[ch * 9 + ky * 3 + kx];
                if (x1 <= x0) continue;
                for (int y = y0; y < y1; ++y)
                    axpy(op + y * wd + x0, wv, xp + (y + dy) * wd + x0 + dx, x1 - x0);
            }
        }
    }
    if (rec) {
        GradTape::active()->record(out, [x = x, w = w, b = b, out = out, c, h, wd]() mutable {
            const float* g = out.grad().data();
            const float* xd = x.data().data();
            const float* wdt = w.data().data();
            const bool want_x = x.requires_grad();
            const bool want_w = w.requires_grad();
            float* dx = want_x ? x.grad().data() : nullptr;
            float* dw = want_w ? w.grad().data() : nullptr;
            for (int ch = 0; ch < c; ++ch) {
                const float* xp = xd + ch * h * wd;
                const float* gp = g + ch * h * wd;
                for (int ky = 0; ky < 3; ++ky) {
                    const int dy = ky - 1;
                    const int y0 = std::max(0, -dy), y1 = h - std::max(0, dy);
                    for (int kx = 0; kx < 3; ++kx) {
                        const int dx_ = kx - 1;
                        const int x0 = std::max(0, -dx_), x1 = wd - std::max(0, dx_);
                        if (x1 <= x0) continue;
                        const float wv = wdt[ch * 9 + ky * 3 + kx];
                        double wacc = 0.0;
                        for (int y = y0; y < y1; ++y) {
                            const float* grow = gp + y * wd + x0;
                            const float* xrow = xp + (y + dy) * wd + x0 + dx_;
                            if (want_x)
                                axpy(dx + ch * h * wd + (y + dy) * wd + x0 + dx_, wv, grow,
                                     x1 - x0);
                            if (want_w) wacc += static_cast<double>(dot8(grow, xrow, x1 - x0));
                        }
                        if (want_w) dw[ch * 9 + ky * 3 + kx] += static_cast<float>(wacc);
                    }
                }
                if (b.defined() && b.requires_grad())
                    b.grad()[static_cast<std::size_t>(ch)] +=
                        static_cast<float>(dsum(gp, h * wd));
            }
        });
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    check_chw(x, "conv2d");
    require(w.defined() && w.ndim() == 4, "conv2d: weight must be [Cout x Cin x kh x kw]");
    require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
    const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    require(w.dim(1) == ci, "conv2d: weight " + shape_str(w.shape()) + " does not match input " +
                                shape_str(x.shape()));
    require(h + 2 * pad >= kh && wd + 2 * pad >= kw,
            "conv2d: kernel larger than padded input: " + shape_str(w.shape()) + " on " +
                shape_str(x.shape()));
    if (b.defined())
        require(b.numel() == co, "conv2d: bias must have " + std::to_string(co) + " elements");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    const bool rec = b.defined() ? recording({&x, &w, &b}) : recording({&x, &w});
    Tensor out = Tensor::zeros({co, ho, wo}, rec);
    const float* xd = x.data().data();
    const float* wdt = w.data().data();
    float* od = out.data().data();

    // Valid output-column range for one kernel column offset.
    auto xo_range = [&](int kx, int& lo, int& hi) {
        const int shift = kx - pad;  // xi = xo*stride + shift
        lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
        hi = std::min(wo - 1, (wd - 1 - shift) / stride);
    };
    for (int o = 0; o < co; ++o) {
        float* op = od + o * ho * wo;
        if (b.defined()) std::fill(op, op + ho * wo, b.data()[static_cast<std::size_t>(o)]);
        for (int c = 0; c < ci; ++c) {
            const float* xp = xd + c * h * wd;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const float wv = wdt[((o * ci + c) * kh + ky) * kw + kx];
                    int lo, hi;
                    xo_range(kx, lo, hi);
                    for (int yo = 0; yo < ho; ++yo) {
                        const int yi = yo * stride + ky - pad;
                        if (yi < 0 || yi >= h) continue;
                        const float* xrow = xp + yi * wd + kx - pad;
                        float* orow = op + yo * wo;
                        for (int xo = lo; xo <= hi; ++xo) orow[xo] += wv * xrow[xo * stride];
                    }
                }
            }
        }
    }
    if (rec) {
        GradTape::active()->record(out, [x = x, w = w, b = b, out = out, ci, co, h, wd, kh, kw, ho, wo,
                                    stride, pad]() mutable {
            const float* g = out.grad().data();
            const float* xd = x.data().data();
            const float* wdt = w.data().data();
            const bool want_x = x.requires_grad();
            const bool want_w = w.requires_grad();
            float* dx = want_x ? x.grad().data() : nullptr;
            float* dw = want_w ? w.grad().data() : nullptr;
            auto xo_range = [&](int kx, int& lo, int& hi) {
                const int shift = kx - pad;
                lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
                hi = std::min(wo - 1, (wd - 1 - shift) / stride);
            };
            for (int o = 0; o < co; ++o) {
                const float* gp = g + o * ho * wo;
                for (int c = 0; c < ci; ++c) {
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const float wv = wdt[((o * ci + c) * kh + ky) * kw + kx];
                            int lo, hi;
                            xo_range(kx, lo, hi);
                            double wacc = 0.0;
                            for (int yo = 0; yo < ho; ++yo) {
                                const int yi = yo * stride + ky - pad;
                                if (yi < 0 || yi >= h) continue;
                                const float* grow = gp + yo * wo;
                                const int xoff = c * h * wd + yi * wd + kx - pad;
                                for (int xo = lo; xo <= hi; ++xo) {
                                    const float gv = grow[xo];
                                    if (want_x) dx[xoff + xo * stride] += wv * gv;
                                    if (want_w)
                                        wacc += static_cast<double>(gv) *
                                                static_cast<double>(xd[xoff + xo * stride]);
                                }
                            }
                            if (want_w)
                                dw[((o * ci + c) * kh + ky) * kw + kx] +=
                                    static_cast<float>(wacc);
                        }
                    }
                }
                if (b.defined() && b.requires_grad())
                    b.grad()[static_cast<std::size_t>(o)] +=
                        static_cast<float>(dsum(gp, ho * wo));
            }
        });
    }
    return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.defined() && b.defined(), std::string(op) + ": undefined input");
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch: " +
                                        shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const int n = a.numel();
    const bool rec = recording({&a, &b});
    Tensor out = Tensor::zeros(a.shape(), rec);
    const float* ad = a.data().data();
    const float* bd = b.data().data();
    float* od = out.data().data();
    for (int i = 0; i < n; ++i) od[i] = ad[i] + bd[i];
    if (rec) {
        GradTape::active()->record(out, [a = a, b = b, out = out, n]() mutable {
            const float* g = out.grad().data();
            if (a.requires_grad()) axpy(a.grad().data(), 1.f, g, n);
            if (b.requires_grad()) axpy(b.grad().data(), 1.f, g, n);
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const int n = a.numel();
    const bool rec = recording({&a, &b});
    Tensor out = Tensor::zeros(a.shape(), rec);
    const float* ad = a.data().data();
    const float* bd = b.data().data();
    float* od = out.data().data();
    for (int i = 0; i < n; ++i) od[i] = ad[i] - bd[i];
    if (rec) {
        GradTape::active()->record(out, [a = a, b = b, out = out, n]() mutable {
            const float* g = out.grad().data();
            if (a.requires_grad()) axpy(a.grad().data(), 1.f, g, n);
            if (b.requires_grad()) axpy(b.grad().data(), -1.f, g, n);
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const int n = a.numel();
    const bool rec = recording({&a, &b});
    Tensor out = Tensor::zeros(a.shape(), rec);
    const float* ad = a.data().data();
    const float* bd = b.data().data();
    float* od = out.data().data();
    for (int i = 0; i < n; ++i) od[i] = ad[i] * bd[i];
    if (rec) {
        GradTape::active()->record(out, [a = a, b = b, out = out, n]() mutable {
            const float* g = out.grad().data();
            const float* ad = a.data().data();
            const float* bd = b.data().data();
            if (a.requires_grad()) {
                float* da = a.grad().data();
                for (int i = 0; i < n; ++i) da[i] += g[i] * bd[i];
            }
            if (b.requires_grad()) {
                float* db = b.grad().data();
                for (int i = 0; i < n; ++i) db[i] += g[i] * ad[i];
            }
        });
    }
    return out;
}

namespace {
constexpr float kGeluCoef = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluCubic = 0.044715f;
}  // namespace

Tensor gelu(const Tensor& x) {
    require(x.defined(), "gelu: undefined input");
    const int n = x.numel();
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros(x.shape(), rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    std::vector<float> th(static_cast<std::size_t>(rec ? n : 0));
    for (int i = 0; i < n; ++i) {
        const float v = xd[i];
        const float t = std::tanh(kGeluCoef * (v + kGeluCubic * v * v * v));
        if (rec) th[static_cast<std::size_t>(i)] = t;
        od[i] = 0.5f * v * (1.f + t);
    }
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, n, th = std::move(th)]() mutable {
            if (!x.requires_grad()) return;
            const float* g = out.grad().data();
            const float* xd = x.data().data();
            float* dx = x.grad().data();
            for (int i = 0; i < n; ++i) {
                const float v = xd[i];
                const float t = th[static_cast<std::size_t>(i)];
                const float du = kGeluCoef * (1.f + 3.f * kGeluCubic * v * v);
                dx[i] += g[i] * (0.5f * (1.f + t) + 0.5f * v * (1.f - t * t) * du);
            }
        });
    }
    return out;
}

Tensor leaky_relu(const Tensor& x, float slope) {
    require(x.defined(), "leaky_relu: undefined input");
    const int n = x.numel();
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros(x.shape(), rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    for (int i = 0; i < n; ++i) od[i] = xd[i] > 0.f ? xd[i] : slope * xd[i];
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, n, slope]() mutable {
            if (!x.requires_grad()) return;
            const float* g = out.grad().data();
            const float* xd = x.data().data();
            float* dx = x.grad().data();
            for (int i = 0; i < n; ++i) dx[i] += xd[i] > 0.f ? g[i] : slope * g[i];
        });
    }
    return out;
}

Tensor scale(const Tensor& x, float s) {
    require(x.defined(), "scale: undefined input");
    const int n = x.numel();
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros(x.shape(), rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    for (int i = 0; i < n; ++i) od[i] = s * xd[i];
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, n, s]() mutable {
            if (!x.requires_grad()) return;
            axpy(x.grad().data(), s, out.grad().data(), n);
        });
    }
    return out;
}

Tensor div_by(const Tensor& x, const Tensor& s) {
    require(x.defined() && s.defined(), "div_by: undefined input");
    require(s.numel() == 1, "div_by: divisor must be a single element, got " +
                                shape_str(s.shape()));
    const int n = x.numel();
    const float sv = s.data()[0];
    const bool rec = recording({&x, &s});
    Tensor out = Tensor::zeros(x.shape(), rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    for (int i = 0; i < n; ++i) od[i] = xd[i] / sv;
    if (rec) {
        GradTape::active()->record(out, [x = x, s = s, out = out, n, sv]() mutable {
            const float* g = out.grad().data();
            if (x.requires_grad()) axpy(x.grad().data(), 1.f / sv, g, n);
            if (s.requires_grad()) {
                const double dp = ddot(g, x.data().data(), n);
                s.grad()[0] += static_cast<float>(-dp / (static_cast<double>(sv) *
                                                         static_cast<double>(sv)));
            }
        });
    }
    return out;
}

Tensor adaptive_avg_pool(const Tensor& x, int oh, int ow) {
    check_chw(x, "adaptive_avg_pool");
    require(oh >= 1 && ow >= 1, "adaptive_avg_pool: target size must be positive");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros({c, oh, ow}, rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    auto row_bounds = [](int i, int in, int on, int& lo, int& hi) {
        lo = (i * in) / on;
        hi = ((i + 1) * in + on - 1) / on;
    };
    for (int ch = 0; ch < c; ++ch) {
        const float* xp = xd + ch * h * w;
        for (int i = 0; i < oh; ++i) {
            int r0, r1;
            row_bounds(i, h, oh, r0, r1);
            for (int j = 0; j < ow; ++j) {
                int c0, c1;
                row_bounds(j, w, ow, c0, c1);
                double acc = 0.0;
                for (int y = r0; y < r1; ++y)
                    acc += dsum(xp + y * w + c0, c1 - c0);
                od[(ch * oh + i) * ow + j] =
                    static_cast<float>(acc / ((r1 - r0) * (c1 - c0)));
            }
        }
    }
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, c, h, w, oh, ow]() mutable {
            if (!x.requires_grad()) return;
            const float* g = out.grad().data();
            float* dx = x.grad().data();
            auto row_bounds = [](int i, int in, int on, int& lo, int& hi) {
                lo = (i * in) / on;
                hi = ((i + 1) * in + on - 1) / on;
            };
            for (int ch = 0; ch < c; ++ch) {
                float* dp = dx + ch * h * w;
                for (int i = 0; i < oh; ++i) {
                    int r0, r1;
                    row_bounds(i, h, oh, r0, r1);
                    for (int j = 0; j < ow; ++j) {
                        int c0, c1;
                        row_bounds(j, w, ow, c0, c1);
                        const float gv = g[(ch * oh + i) * ow + j] /
                                         static_cast<float>((r1 - r0) * (c1 - c0));
                        for (int y = r0; y < r1; ++y)
                            for (int xx = c0; xx < c1; ++xx) dp[y * w + xx] += gv;
                    }
                }
            }
        });
    }
    return out;
}

Tensor upsample_nearest2x(const Tensor& x) {
    check_chw(x, "upsample_nearest2x");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros({c, 2 * h, 2 * w}, rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            const float* xrow = xd + (ch * h + y) * w;
            float* o0 = od + (ch * 2 * h + 2 * y) * 2 * w;
            float* o1 = o0 + 2 * w;
            for (int xx = 0; xx < w; ++xx) {
                o0[2 * xx] = o0[2 * xx + 1] = xrow[xx];
                o1[2 * xx] = o1[2 * xx + 1] = xrow[xx];
            }
        }
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, c, h, w]() mutable {
            if (!x.requires_grad()) return;
            const float* g = out.grad().data();
            float* dx = x.grad().data();
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y) {
                    float* drow = dx + (ch * h + y) * w;
                    const float* g0 = g + (ch * 2 * h + 2 * y) * 2 * w;
                    const float* g1 = g0 + 2 * w;
                    for (int xx = 0; xx < w; ++xx)
                        drow[xx] += (g0[2 * xx] + g0[2 * xx + 1]) + (g1[2 * xx] + g1[2 * xx + 1]);
                }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(x.defined(), "reshape: undefined input");
    int known = 1, infer = -1;
    for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
        const int d = shape[static_cast<std::size_t>(i)];
        if (d == -1) {
            require(infer == -1, "reshape: at most one dimension may be -1");
            infer = i;
        } else {
            require(d > 0, "reshape: dimensions must be positive, got " + shape_str(shape));
            known *= d;
        }
    }
    if (infer >= 0) {
        require(known > 0 && x.numel() % known == 0,
                "reshape: cannot infer dimension for " + shape_str(x.shape()) + " -> " +
                    shape_str(shape));
        shape[static_cast<std::size_t>(infer)] = x.numel() / known;
    }
    require(shape_numel(shape) == x.numel(), "reshape: element count mismatch: " +
                                                 shape_str(x.shape()) + " -> " + shape_str(shape));
    const int n = x.numel();
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros(shape, rec);
    std::copy(x.data().begin(), x.data().end(), out.data().begin());
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, n]() mutable {
            if (!x.requires_grad()) return;
            axpy(x.grad().data(), 1.f, out.grad().data(), n);
        });
    }
    return out;
}

Tensor flatten(const Tensor& x) {
    require(x.defined(), "flatten: undefined input");
    return reshape(x, {x.numel()});
}

Tensor concat0(std::span<const Tensor> parts) {
    require(!parts.empty(), "concat0: no inputs");
    const Tensor& first = parts[0];
    require(first.defined() && first.ndim() >= 1, "concat0: inputs must have rank >= 1");
    int total0 = 0;
    for (const Tensor& p : parts) {
        require(p.defined() && p.ndim() == first.ndim(),
                "concat0: rank mismatch between " + shape_str(first.shape()) + " and " +
                    (p.defined() ? shape_str(p.shape()) : std::string("<undefined>")));
        for (int i = 1; i < first.ndim(); ++i)
            require(p.dim(i) == first.dim(i), "concat0: trailing dims differ: " +
                                                  shape_str(first.shape()) + " vs " +
                                                  shape_str(p.shape()));
        total0 += p.dim(0);
    }
    Shape oshape = first.shape();
    oshape[0] = total0;
    bool rec = false;
    if (GradTape::active())
        for (const Tensor& p : parts)
            if (p.requires_grad()) rec = true;
    Tensor out = Tensor::zeros(oshape, rec);
    float* od = out.data().data();
    int off = 0;
    for (const Tensor& p : parts) {
        std::copy(p.data().begin(), p.data().end(), od + off);
        off += p.numel();
    }
    if (rec) {
        std::vector<Tensor> held(parts.begin(), parts.end());
        GradTape::active()->record(out, [held = std::move(held), out = out]() mutable {
            const float* g = out.grad().data();
            int off = 0;
            for (Tensor& p : held) {
                if (p.requires_grad()) axpy(p.grad().data(), 1.f, g + off, p.numel());
                off += p.numel();
            }
        });
    }
    return out;
}

Tensor concat0(const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat0(std::span<const Tensor>(parts, 2));
}

Tensor concat0(const Tensor& a, const Tensor& b, const Tensor& c) {
    const Tensor parts[] = {a, b, c};
    return concat0(std::span<const Tensor>(parts, 3));
}

Tensor slice0(const Tensor& x, int begin, int end) {
    require(x.defined() && x.ndim() >= 1, "slice0: input must have rank >= 1");
    require(0 <= begin && begin < end && end <= x.dim(0),
            "slice0: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                ") invalid for " + shape_str(x.shape()));
    Shape oshape = x.shape();
    oshape[0] = end - begin;
    const int rowsz = x.numel() / x.dim(0);
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros(oshape, rec);
    std::copy(x.data().begin() + static_cast<std::ptrdiff_t>(begin) * rowsz,
              x.data().begin() + static_cast<std::ptrdiff_t>(end) * rowsz, out.data().begin());
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, begin, rowsz]() mutable {
            if (!x.requires_grad()) return;
            axpy(x.grad().data() + static_cast<std::ptrdiff_t>(begin) * rowsz, 1.f,
                 out.grad().data(), out.numel());
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    require(x.defined(), "sum: undefined input");
    const int n = x.numel();
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros({1}, rec);
    out.data()[0] = static_cast<float>(dsum(x.data().data(), n));
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, n]() mutable {
            if (!x.requires_grad()) return;
            const float g = out.grad()[0];
            float* dx = x.grad().data();
            for (int i = 0; i < n; ++i) dx[i] += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& x) {
    require(x.defined(), "mean: undefined input");
    const int n = x.numel();
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros({1}, rec);
    out.data()[0] = static_cast<float>(dsum(x.data().data(), n) / n);
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, n]() mutable {
            if (!x.requires_grad()) return;
            const float g = out.grad()[0] / static_cast<float>(n);
            float* dx = x.grad().data();
            for (int i = 0; i < n; ++i) dx[i] += g;
        });
    }
    return out;
}

Tensor abs(const Tensor& x) {
    require(x.defined(), "abs: undefined input");
    const int n = x.numel();
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros(x.shape(), rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    for (int i = 0; i < n; ++i) od[i] = std::fabs(xd[i]);
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, n]() mutable {
            if (!x.requires_grad()) return;
            const float* g = out.grad().data();
            const float* xd = x.data().data();
            float* dx = x.grad().data();
            for (int i = 0; i < n; ++i)
                dx[i] += xd[i] > 0.f ? g[i] : (xd[i] < 0.f ? -g[i] : 0.f);
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.defined() && w.defined(), "linear: undefined input");
    require(w.ndim() == 2, "linear: weight must be [out x in], got " + shape_str(w.shape()));
    require(x.ndim() == 1 || x.ndim() == 2,
            "linear: input must have rank 1 or 2, got " + shape_str(x.shape()));
    const int ni = w.dim(1), no = w.dim(0);
    const int rows = x.ndim() == 1 ? 1 : x.dim(0);
    const int xin = x.ndim() == 1 ? x.dim(0) : x.dim(1);
    require(xin == ni, "linear: input " + shape_str(x.shape()) + " does not match weight " +
                           shape_str(w.shape()));
    if (b.defined())
        require(b.numel() == no, "linear: bias must have " + std::to_string(no) + " elements");
    const bool rec = b.defined() ? recording({&x, &w, &b}) : recording({&x, &w});
    Shape oshape = x.ndim() == 1 ? Shape{no} : Shape{rows, no};
    Tensor out = Tensor::zeros(oshape, rec);
    const float* xd = x.data().data();
    const float* wdt = w.data().data();
    float* od = out.data().data();
    for (int i = 0; i < rows; ++i)
        for (int o = 0; o < no; ++o)
            od[i * no + o] = dot8(wdt + o * ni, xd + i * ni, ni) +
                             (b.defined() ? b.data()[static_cast<std::size_t>(o)] : 0.f);
    if (rec) {
        GradTape::active()->record(out, [x = x, w = w, b = b, out = out, rows, ni, no]() mutable {
            const float* g = out.grad().data();
            const float* xd = x.data().data();
            const float* wdt = w.data().data();
            if (x.requires_grad()) {
                float* dx = x.grad().data();
                for (int i = 0; i < rows; ++i)
                    for (int o = 0; o < no; ++o) axpy(dx + i * ni, g[i * no + o], wdt + o * ni, ni);
            }
            if (w.requires_grad()) {
                float* dw = w.grad().data();
                for (int i = 0; i < rows; ++i)
                    for (int o = 0; o < no; ++o) axpy(dw + o * ni, g[i * no + o], xd + i * ni, ni);
            }
            if (b.defined() && b.requires_grad()) {
                float* db = b.grad().data();
                for (int i = 0; i < rows; ++i)
                    for (int o = 0; o < no; ++o) db[o] += g[i * no + o];
            }
        });
    }
    return out;
}

Tensor scale_shift_channels(const Tensor& x, const Tensor& s, const Tensor& t) {
    check_chw(x, "scale_shift_channels");
    require(s.defined() && t.defined(), "scale_shift_channels: undefined scale/shift");
    const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
    require(s.numel() == c && t.numel() == c,
            "scale_shift_channels: scale " + shape_str(s.shape()) + " and shift " +
                shape_str(t.shape()) + " must have " + std::to_string(c) + " elements");
    const bool rec = recording({&x, &s, &t});
    Tensor out = Tensor::zeros(x.shape(), rec);
    const float* xd = x.data().data();
    const float* sd = s.data().data();
    const float* td = t.data().data();
    float* od = out.data().data();
    for (int ch = 0; ch < c; ++ch) {
        const float sv = sd[ch], tv = td[ch];
        const float* xrow = xd + ch * hw;
        float* orow = od + ch * hw;
        for (int i = 0; i < hw; ++i) orow[i] = sv * xrow[i] + tv;
    }
    if (rec) {
        GradTape::active()->record(out, [x = x, s = s, t = t, out = out, c, hw]() mutable {
            const float* g = out.grad().data();
            const float* xd = x.data().data();
            const float* sd = s.data().data();
            if (x.requires_grad()) {
                float* dx = x.grad().data();
                for (int ch = 0; ch < c; ++ch) axpy(dx + ch * hw, sd[ch], g + ch * hw, hw);
            }
            if (s.requires_grad()) {
                float* ds = s.grad().data();
                for (int ch = 0; ch < c; ++ch)
                    ds[ch] += static_cast<float>(ddot(g + ch * hw, xd + ch * hw, hw));
            }
            if (t.requires_grad()) {
                float* dt = t.grad().data();
                for (int ch = 0; ch < c; ++ch)
                    dt[ch] += static_cast<float>(dsum(g + ch * hw, hw));
            }
        });
    }
    return out;
}

}  // namespace promptrr
