#include "promptrr/fpe.hpp"

#include "promptrr/ops.hpp"
#include "promptrr/wavelet.hpp"

namespace promptrr {

namespace {

FpeBranchParams make_branch(ParamRegistry& reg, const std::string& prefix, int in_ch, int c_f,
                            int head_dim, int r_blocks, Rng& rng) {
    FpeBranchParams b;
    b.stem_w = reg.uniform(prefix + ".stem_w", {c_f, in_ch, 3, 3}, in_ch * 9, rng);
    b.stem_b = reg.zeros(prefix + ".stem_b", {c_f});
    b.blocks.resize(static_cast<std::size_t>(r_blocks));
    for (int i = 0; i < r_blocks; ++i) {
        const std::string bp = prefix + ".res" + std::to_string(i);
        FpeResBlock& rb = b.blocks[static_cast<std::size_t>(i)];
        rb.c1_w = reg.uniform(bp + ".c1_w", {c_f, c_f, 3, 3}, c_f * 9, rng);
        rb.c1_b = reg.zeros(bp + ".c1_b", {c_f});
        rb.c2_w = reg.uniform(bp + ".c2_w", {c_f, c_f, 3, 3}, c_f * 9, rng);
        rb.c2_b = reg.zeros(bp + ".c2_b", {c_f});
    }
    b.fc1_w = reg.uniform(prefix + ".fc1_w", {head_dim, c_f}, c_f, rng);
    b.fc1_b = reg.zeros(prefix + ".fc1_b", {head_dim});
    b.fc2_w = reg.uniform(prefix + ".fc2_w", {head_dim, head_dim}, head_dim, rng);
    b.fc2_b = reg.zeros(prefix + ".fc2_b", {head_dim});
    return b;
}

Tensor branch_forward(const Tensor& x, const FpeBranchParams& b, int c_f, int n_p, int d_p) {
    Tensor h = conv2d(x, b.stem_w, b.stem_b, 1, 1);
    for (const FpeResBlock& rb : b.blocks) {
        Tensor t = conv2d(leaky_relu(conv2d(h, rb.c1_w, rb.c1_b, 1, 1)), rb.c2_w, rb.c2_b, 1, 1);
        h = add(h, t);
    }
    Tensor pooled = reshape(adaptive_avg_pool(h, 1, 1), {c_f});
    Tensor v = linear(linear(pooled, b.fc1_w, b.fc1_b), b.fc2_w, b.fc2_b);
    return reshape(v, {n_p, d_p});
}

}  // namespace

FpeParams make_fpe_params(ParamRegistry& reg, const std::string& prefix, int k, int n_p, int d_p,
                          int c_f, int r_blocks, Rng& rng) {
    if (k < 1 || n_p < 1 || d_p < 1 || c_f < 1 || r_blocks < 0)
        throw TensorError("fpe params: sizes must be positive");
    FpeParams p;
    p.k = k;
    p.n_p = n_p;
    p.d_p = d_p;
    p.c_f = c_f;
    p.lf = make_branch(reg, prefix + ".lf", 3 * k, c_f, n_p * d_p, r_blocks, rng);
    p.hf = make_branch(reg, prefix + ".hf", 9 * k, c_f, n_p * d_p, r_blocks, rng);
    return p;
}

FrequencyPromptPair fpe_encode(const Tensor& images, const FpeParams& params) {
    if (!images.defined() || images.ndim() != 3)
        throw TensorError("fpe_encode: images must be rank 3");
    if (images.dim(0) != 3 * params.k)
        throw TensorError("fpe_encode: expected " + std::to_string(3 * params.k) +
                          " channels for k=" + std::to_string(params.k) + ", got " +
                          std::to_string(images.dim(0)));
    FreqSplit bands = split_freq(haar2_fwd(images));
    FrequencyPromptPair out;
    out.lf = branch_forward(bands.lf, params.lf, params.c_f, params.n_p, params.d_p);
    out.hf = branch_forward(bands.hf, params.hf, params.c_f, params.n_p, params.d_p);
    return out;
}

}  // namespace promptrr
