#include "promptrr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "promptrr/model.hpp"
#include "promptrr/ops.hpp"
#include "promptrr/synth.hpp"

namespace promptrr {
namespace {

TrainConfig micro_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.patch_size = 16;
    cfg.model.base_channels = 8;
    cfg.model.stage_blocks = {1, 1, 1, 1};
    cfg.model.stage_heads = {1, 2, 2, 4};
    cfg.model.n_p = 2;
    cfg.model.d_p = 4;
    cfg.fpe_res_blocks = 1;
    cfg.timesteps = 2;
    return cfg;
}

struct Coord {
    std::size_t tensor;
    std::size_t index;
};

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& opt, std::ostream* console) {
    Rng rng(Rng::derive(opt.seed, 20));
    PromptRR m = build_model(micro_config(opt.seed));

    // Zero-initialized heads (output conv, modulation projections) would give
    // identically zero gradients upstream, so audit at a generic nearby point.
    for (const auto& e : m.reg.entries()) {
        Tensor t = e.second;
        for (float& v : t.data()) v += static_cast<float>(rng.uniform(-0.05, 0.05));
    }

    const Tensor b = random_scene(16, 16, rng);
    const Tensor r = random_scene(16, 16, rng);
    const ImagePair pair = synthesize(b, r, SynthSpec{}, rng);

    std::vector<Tensor> eps_l, eps_h;
    for (int t = 1; t <= m.sched.steps; ++t) {
        Tensor el = Tensor::zeros({m.cfg.model.n_p, m.cfg.model.d_p});
        Tensor eh = Tensor::zeros({m.cfg.model.n_p, m.cfg.model.d_p});
        for (float& v : el.data()) v = static_cast<float>(rng.normal());
        for (float& v : eh.data()) v = static_cast<float>(rng.normal());
        eps_l.push_back(el);
        eps_h.push_back(eh);
    }

    // joint-style loss; every timestep appears so each one-hot path is live
    auto loss_fn = [&]() {
        const FrequencyPromptPair p0 = target_prompts(m, pair.gt_b, pair.input_q);
        const FrequencyPromptPair cond = cond_prompts(m, pair.input_q);
        const Tensor out = restore_image(m, pair.input_q, p0);
        Tensor loss = mean(abs(sub(out, pair.gt_b)));
        for (int t = 1; t <= m.sched.steps; ++t) {
            loss = add(loss, diffusion_loss(p0, cond, t,
                                            {eps_l[static_cast<std::size_t>(t - 1)],
                                             eps_h[static_cast<std::size_t>(t - 1)]},
                                            m.den_lf, m.den_hf, m.sched));
        }
        return loss;
    };

    const auto& entries = m.reg.entries();
    std::vector<std::vector<float>> analytic(entries.size());
    {
        for (const auto& e : entries) {
            Tensor t = e.second;
            t.zero_grad();
        }
        GradTape tape;
        tape.backward(loss_fn());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            Tensor t = entries[i].second;
            auto g = t.grad();
            analytic[i].assign(g.begin(), g.end());
        }
    }

    // budget: one coordinate per tensor first, remainder spread by size
    std::vector<Coord> coords;
    if (static_cast<int>(entries.size()) <= opt.max_coords) {
        std::size_t total = 0;
        for (const auto& e : entries) total += static_cast<std::size_t>(e.second.numel());
        for (std::size_t i = 0; i < entries.size(); ++i)
            coords.push_back({i, static_cast<std::size_t>(
                                     rng.uniform_int(entries[i].second.numel()))});
        while (static_cast<int>(coords.size()) < opt.max_coords) {
            std::size_t flat =
                static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(total)));
            flat = std::min(flat, total - 1);
            std::size_t i = 0;
            while (flat >= static_cast<std::size_t>(entries[i].second.numel())) {
                flat -= static_cast<std::size_t>(entries[i].second.numel());
                ++i;
            }
            coords.push_back({i, flat});
        }
    } else {
        for (int k = 0; k < opt.max_coords; ++k) {
            const std::size_t i =
                static_cast<std::size_t>(rng.uniform_int(static_cast<int>(entries.size())));
            coords.push_back(
                {i, static_cast<std::size_t>(rng.uniform_int(entries[i].second.numel()))});
        }
    }

    NoGradScope frozen;
    auto eval = [&]() { return static_cast<double>(loss_fn().item()); };

    GradcheckReport rep;
    for (const Coord& c : coords) {
        Tensor t = entries[c.tensor].second;
        auto d = t.data();
        const float orig = d[c.index];
        const float h = static_cast<float>(opt.step) * std::max(1.f, std::fabs(orig));

        // five-point stencil: central differences at ~h and ~2h, then the
        // quadratic truncation term is eliminated using the realized spacings
        // (float rounding makes them slightly unequal)
        const float xp = orig + h, xm = orig - h;
        const float xp2 = orig + 2 * h, xm2 = orig - 2 * h;
        d[c.index] = xp;
        const double fp = eval();
        d[c.index] = xm;
        const double fm = eval();
        d[c.index] = xp2;
        const double fp2 = eval();
        d[c.index] = xm2;
        const double fm2 = eval();
        d[c.index] = orig;
        const double h1 = 0.5 * (static_cast<double>(xp) - static_cast<double>(xm));
        const double h2 = 0.5 * (static_cast<double>(xp2) - static_cast<double>(xm2));
        const double d1 = (fp - fm) / (2.0 * h1);
        const double d2 = (fp2 - fm2) / (2.0 * h2);
        const double numeric = (h2 * h2 * d1 - h1 * h1 * d2) / (h2 * h2 - h1 * h1);
        const double a = static_cast<double>(analytic[c.tensor][c.index]);
        const double err =
            std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
        ++rep.checked;
        if (err > rep.worst_rel) {
            rep.worst_rel = err;
            rep.worst_param = entries[c.tensor].first;
        }
        if (err > opt.tol) ++rep.failed;
        if (console && rep.checked % 250 == 0)
            (*console) << "gradcheck: " << rep.checked << "/" << coords.size()
                       << " coordinates, worst rel " << rep.worst_rel << std::endl;
    }
    if (console)
        (*console) << "gradcheck: checked " << rep.checked << ", failed " << rep.failed
                   << ", worst rel " << rep.worst_rel << " (" << rep.worst_param << ")"
                   << std::endl;
    return rep;
}

}  // namespace promptrr
