#include "promptrr/wavelet.hpp"

#include "promptrr/ops.hpp"

namespace promptrr {

namespace {

// fwd: reads a 2x2 block, writes one value per band.
// The same butterfly inverts itself, and (being symmetric) also moves
// gradients the other way.
inline void butterfly(float a, float b, float c, float d, float& ll, float& lh, float& hl,
                      float& hh) {
    ll = 0.5f * (a + b + c + d);
    lh = 0.5f * (a - b + c - d);
    hl = 0.5f * (a + b - c - d);
    hh = 0.5f * (a - b - c + d);
}

}  // namespace

Tensor haar2_fwd(const Tensor& x) {
    if (!x.defined() || x.ndim() != 3)
        throw TensorError("haar2_fwd: expected [C x H x W], got " +
                          (x.defined() ? shape_str(x.shape()) : std::string("<undefined>")));
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        throw TensorError("haar2_fwd: spatial dims must be even, got " + shape_str(x.shape()));
    const int oh = h / 2, ow = w / 2;
    const bool rec = recording({&x});
    Tensor out = Tensor::zeros({4 * c, oh, ow}, rec);
    const float* xd = x.data().data();
    float* od = out.data().data();
    const int band = c * oh * ow;
    for (int ch = 0; ch < c; ++ch) {
        const float* xp = xd + ch * h * w;
        for (int y = 0; y < oh; ++y) {
            const float* r0 = xp + (2 * y) * w;
            const float* r1 = r0 + w;
            const int obase = (ch * oh + y) * ow;
            for (int xx = 0; xx < ow; ++xx) {
                butterfly(r0[2 * xx], r0[2 * xx + 1], r1[2 * xx], r1[2 * xx + 1],
                          od[obase + xx], od[band + obase + xx], od[2 * band + obase + xx],
                          od[3 * band + obase + xx]);
            }
        }
    }
    if (rec) {
        GradTape::active()->record(out, [x = x, out = out, c, h, w, oh, ow, band]() mutable {
            if (!x.requires_grad()) return;
            const float* g = out.grad().data();
            float* dx = x.grad().data();
            for (int ch = 0; ch < c; ++ch) {
                float* dp = dx + ch * h * w;
                for (int y = 0; y < oh; ++y) {
                    float* r0 = dp + (2 * y) * w;
                    float* r1 = r0 + w;
                    const int obase = (ch * oh + y) * ow;
                    for (int xx = 0; xx < ow; ++xx) {
                        float da, db, dc, dd;
                        butterfly(g[obase + xx], g[band + obase + xx], g[2 * band + obase + xx],
                                  g[3 * band + obase + xx], da, db, dc, dd);
                        r0[2 * xx] += da;
                        r0[2 * xx + 1] += db;
                        r1[2 * xx] += dc;
                        r1[2 * xx + 1] += dd;
                    }
                }
            }
        });
    }
    return out;
}

Tensor haar2_inv(const Tensor& packed) {
    if (!packed.defined() || packed.ndim() != 3 || packed.dim(0) % 4 != 0)
        throw TensorError(
            "haar2_inv: expected [4C x h x w], got " +
            (packed.defined() ? shape_str(packed.shape()) : std::string("<undefined>")));
    const int c = packed.dim(0) / 4, oh = packed.dim(1), ow = packed.dim(2);
    const int h = 2 * oh, w = 2 * ow;
    const bool rec = recording({&packed});
    Tensor out = Tensor::zeros({c, h, w}, rec);
    const float* pd = packed.data().data();
    float* od = out.data().data();
    const int band = c * oh * ow;
    for (int ch = 0; ch < c; ++ch) {
        float* op = od + ch * h * w;
        for (int y = 0; y < oh; ++y) {
            float* r0 = op + (2 * y) * w;
            float* r1 = r0 + w;
            const int pbase = (ch * oh + y) * ow;
            for (int xx = 0; xx < ow; ++xx) {
                butterfly(pd[pbase + xx], pd[band + pbase + xx], pd[2 * band + pbase + xx],
                          pd[3 * band + pbase + xx], r0[2 * xx], r0[2 * xx + 1], r1[2 * xx],
                          r1[2 * xx + 1]);
            }
        }
    }
    if (rec) {
        GradTape::active()->record(
            out, [packed = packed, out = out, c, h, w, oh, ow, band]() mutable {
                if (!packed.requires_grad()) return;
                const float* g = out.grad().data();
                float* dp = packed.grad().data();
                for (int ch = 0; ch < c; ++ch) {
                    const float* gp = g + ch * h * w;
                    for (int y = 0; y < oh; ++y) {
                        const float* r0 = gp + (2 * y) * w;
                        const float* r1 = r0 + w;
                        const int pbase = (ch * oh + y) * ow;
                        for (int xx = 0; xx < ow; ++xx) {
                            float dll, dlh, dhl, dhh;
                            butterfly(r0[2 * xx], r0[2 * xx + 1], r1[2 * xx], r1[2 * xx + 1],
                                      dll, dlh, dhl, dhh);
                            dp[pbase + xx] += dll;
                            dp[band + pbase + xx] += dlh;
                            dp[2 * band + pbase + xx] += dhl;
                            dp[3 * band + pbase + xx] += dhh;
                        }
                    }
                }
            });
    }
    return out;
}

WaveletBands split_bands(const Tensor& packed) {
    if (!packed.defined() || packed.ndim() != 3 || packed.dim(0) % 4 != 0)
        throw TensorError(
            "split_bands: expected [4C x h x w], got " +
            (packed.defined() ? shape_str(packed.shape()) : std::string("<undefined>")));
    const int c = packed.dim(0) / 4;
    return WaveletBands{slice0(packed, 0, c), slice0(packed, c, 2 * c),
                        slice0(packed, 2 * c, 3 * c), slice0(packed, 3 * c, 4 * c)};
}

FreqSplit split_freq(const Tensor& packed) {
    if (!packed.defined() || packed.ndim() != 3 || packed.dim(0) % 4 != 0)
        throw TensorError(
            "split_freq: expected [4C x h x w], got " +
            (packed.defined() ? shape_str(packed.shape()) : std::string("<undefined>")));
    const int c = packed.dim(0) / 4;
    return FreqSplit{slice0(packed, 0, c), slice0(packed, c, 4 * c)};
}

}  // namespace promptrr
