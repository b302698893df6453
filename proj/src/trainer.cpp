#include "promptrr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "promptrr/image_io.hpp"
#include "promptrr/metrics.hpp"
#include "promptrr/ops.hpp"
#include "promptrr/optim.hpp"

namespace promptrr {
namespace {

namespace fs = std::filesystem;

Tensor crop3(const Tensor& img, int y, int x, int size) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (y + size > h || x + size > w) throw TensorError("crop3: window out of bounds");
    Tensor out = Tensor::zeros({c, size, size});
    auto id = img.data();
    auto od = out.data();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j)
                od[(static_cast<std::size_t>(ch) * size + i) * size + j] =
                    id[(static_cast<std::size_t>(ch) * h + y + i) * w + x + j];
    return out;
}

struct BatchItem {
    Tensor input, gt;
};

BatchItem draw_item(const TrainSet& data, int patch, Rng& rng) {
    const LoadedPair& p = data.pairs[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(data.pairs.size())))];
    const int h = p.input_q.dim(1), w = p.input_q.dim(2);
    if (h < patch || w < patch)
        throw TensorError("trainer: image " + shape_str(p.input_q.shape()) +
                          " is smaller than patch_size " + std::to_string(patch));
    const int y = h == patch ? 0 : rng.uniform_int(h - patch + 1);
    const int x = w == patch ? 0 : rng.uniform_int(w - patch + 1);
    return {crop3(p.input_q, y, x, patch), crop3(p.gt_b, y, x, patch)};
}

Tensor draw_normal_prompt(int n_p, int d_p, Rng& rng) {
    Tensor e = Tensor::zeros({n_p, d_p});
    for (float& v : e.data()) v = static_cast<float>(rng.normal());
    return e;
}

Tensor l1_loss(const Tensor& out, const Tensor& gt) { return mean(abs(sub(out, gt))); }

struct StepValues {
    double l1 = 0.0, ldiff_l = 0.0, ldiff_h = 0.0;
    double total() const { return l1 + ldiff_l + ldiff_h; }
};

class RunLog {
public:
    RunLog(const TrainConfig& cfg, const std::string& stage, std::ostream* console)
        : stage_(stage), console_(console), every_(cfg.log_every) {
        fs::create_directories(cfg.out_dir);
        const std::string path = cfg.out_dir + "/" + stage + "_metrics.jsonl";
        out_.open(path);
        if (!out_) throw std::runtime_error("trainer: cannot write " + path);
    }

    void log(int step, int total_steps, const StepValues& v) {
        const nlohmann::json j{{"stage", stage_}, {"step", step},        {"L1", v.l1},
                               {"Ldiff_l", v.ldiff_l}, {"Ldiff_h", v.ldiff_h},
                               {"total", v.total()}};
        out_ << j.dump() << "\n";
        if (console_ && (step == 1 || step == total_steps || step % every_ == 0)) {
            char line[192];
            std::snprintf(line, sizeof(line),
                          "step %d, L1 %.6f, Ldiff_l %.6f, Ldiff_h %.6f, total %.6f", step, v.l1,
                          v.ldiff_l, v.ldiff_h, v.total());
            (*console_) << line << std::endl;
        }
    }

private:
    std::string stage_;
    std::ostream* console_;
    int every_;
    std::ofstream out_;
};

void check_finite(const std::string& stage, int step, const StepValues& v) {
    if (std::isfinite(v.l1) && std::isfinite(v.ldiff_l) && std::isfinite(v.ldiff_h)) return;
    char msg[192];
    std::snprintf(msg, sizeof(msg),
                  "trainer: non-finite loss in %s at step %d (L1 %g, Ldiff_l %g, Ldiff_h %g)",
                  stage.c_str(), step, v.l1, v.ldiff_l, v.ldiff_h);
    throw std::runtime_error(msg);
}

double mean_of(const std::vector<double>& h, bool front, std::size_t n) {
    n = std::min(n, h.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += front ? h[i] : h[h.size() - 1 - i];
    return n ? s / static_cast<double>(n) : 0.0;
}

StageResult finish_stage(PromptRR& m, const std::string& stage, int iterations,
                         std::vector<double> history) {
    StageResult r;
    r.stage = stage;
    r.total_history = std::move(history);
    r.initial_loss = mean_of(r.total_history, true, 10);
    r.final_loss = mean_of(r.total_history, false, 10);
    r.checkpoint_path = stage_checkpoint_path(m.cfg, stage);
    CheckpointMeta meta;
    meta.preset = m.cfg.preset;
    meta.stage = stage;
    meta.iteration = iterations;
    meta.seed = m.cfg.seed;
    meta.config_hash = text_hash(canonical_config(m.cfg));
    save_checkpoint(r.checkpoint_path, meta, m.reg);
    return r;
}

// Copies freshly initialized values over every parameter matching `prefix`.
void reinit_prefix(PromptRR& m, const std::string& prefix) {
    PromptRR fresh = build_model(m.cfg);
    const auto& src = fresh.reg.entries();
    const auto& dst = m.reg.entries();
    if (src.size() != dst.size()) throw TensorError("reinit: model layout changed");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (dst[i].first.rfind(prefix, 0) != 0) continue;
        Tensor d = dst[i].second;
        auto sd = src[i].second.data();
        auto dd = d.data();
        for (std::size_t j = 0; j < sd.size(); ++j) dd[j] = sd[j];
    }
}

}  // namespace

TrainSet load_train_set(const std::string& dir) {
    const int n = count_pairs(dir);
    if (n == 0) throw std::runtime_error("trainer: no image pairs found under " + dir);
    TrainSet set;
    set.pairs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) set.pairs.push_back(load_pair(dir, i));
    return set;
}

std::string stage_checkpoint_path(const TrainConfig& cfg, const std::string& stage) {
    return cfg.out_dir + "/" + stage + ".ckpt";
}

CheckpointMeta load_stage_checkpoint(PromptRR& m, const std::string& path) {
    const CheckpointMeta meta = load_checkpoint(path, m.reg);
    if (meta.preset != m.cfg.preset)
        throw std::runtime_error("trainer: checkpoint " + path + " was trained with preset '" +
                                 meta.preset + "' but the current config uses '" + m.cfg.preset +
                                 "'");
    return meta;
}

StageResult stage_pretrain(PromptRR& m, const TrainSet& data, std::ostream* console) {
    RunLog log(m.cfg, "pretrain", console);
    Rng rng(Rng::derive(m.cfg.seed, 1));
    AdamConfig acfg;
    acfg.lr = m.cfg.learning_rate;
    acfg.weight_decay = m.cfg.weight_decay;
    std::vector<Tensor> params = m.reg.collect("fpe_pre.");
    for (Tensor& t : m.reg.collect("pf.")) params.push_back(t);
    Adam opt(std::move(params), acfg);

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(m.cfg.iters_pretrain));
    for (int step = 1; step <= m.cfg.iters_pretrain; ++step) {
        GradTape tape;
        Tensor loss;
        for (int b = 0; b < m.cfg.batch_size; ++b) {
            const BatchItem item = draw_item(data, m.cfg.patch_size, rng);
            const FrequencyPromptPair prompts = target_prompts(m, item.gt, item.input);
            const Tensor out = restore_image(m, item.input, prompts);
            const Tensor item_loss = l1_loss(out, item.gt);
            loss = loss.defined() ? add(loss, item_loss) : item_loss;
        }
        loss = scale(loss, 1.f / static_cast<float>(m.cfg.batch_size));

        StepValues v;
        v.l1 = loss.item();
        check_finite("pretrain", step, v);
        tape.backward(loss);
        opt.step();
        opt.zero_grad();
        history.push_back(v.total());
        log.log(step, m.cfg.iters_pretrain, v);
    }
    return finish_stage(m, "pretrain", m.cfg.iters_pretrain, std::move(history));
}

StageResult stage_diffusion(PromptRR& m, const TrainSet& data, std::ostream* console) {
    RunLog log(m.cfg, "diffusion", console);
    Rng rng(Rng::derive(m.cfg.seed, 2));
    AdamConfig acfg;
    acfg.lr = m.cfg.learning_rate;
    std::vector<Tensor> params = m.reg.collect("fpe_con.");
    for (Tensor& t : m.reg.collect("den_lf.")) params.push_back(t);
    for (Tensor& t : m.reg.collect("den_hf.")) params.push_back(t);
    Adam opt(std::move(params), acfg);

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(m.cfg.iters_diffusion));
    for (int step = 1; step <= m.cfg.iters_diffusion; ++step) {
        GradTape tape;
        Tensor loss_l, loss_h;
        for (int b = 0; b < m.cfg.batch_size; ++b) {
            const BatchItem item = draw_item(data, m.cfg.patch_size, rng);
            FrequencyPromptPair p0;
            {
                NoGradScope frozen;  // targets come from the frozen encoder
                p0 = target_prompts(m, item.gt, item.input);
            }
            const FrequencyPromptPair cond = cond_prompts(m, item.input);
            const int t = 1 + rng.uniform_int(m.sched.steps);
            const Tensor eps_l = draw_normal_prompt(m.cfg.model.n_p, m.cfg.model.d_p, rng);
            const Tensor eps_h = draw_normal_prompt(m.cfg.model.n_p, m.cfg.model.d_p, rng);
            const Tensor bl = diffusion_loss_term(
                p0.lf, cond.lf, t, eps_l,
                [&](const Tensor& c, const Tensor& n, int tt) {
                    return denoiser_forward(c, n, tt, m.den_lf);
                },
                m.sched);
            const Tensor bh = diffusion_loss_term(
                p0.hf, cond.hf, t, eps_h,
                [&](const Tensor& c, const Tensor& n, int tt) {
                    return denoiser_forward(c, n, tt, m.den_hf);
                },
                m.sched);
            loss_l = loss_l.defined() ? add(loss_l, bl) : bl;
            loss_h = loss_h.defined() ? add(loss_h, bh) : bh;
        }
        const float inv = 1.f / static_cast<float>(m.cfg.batch_size);
        loss_l = scale(loss_l, inv);
        loss_h = scale(loss_h, inv);
        const Tensor loss = add(loss_l, loss_h);

        StepValues v;
        v.ldiff_l = loss_l.item();
        v.ldiff_h = loss_h.item();
        check_finite("diffusion", step, v);
        tape.backward(loss);
        opt.step();
        opt.zero_grad();
        history.push_back(v.total());
        log.log(step, m.cfg.iters_diffusion, v);
    }
    return finish_stage(m, "diffusion", m.cfg.iters_diffusion, std::move(history));
}

StageResult stage_joint(PromptRR& m, const TrainSet& data, std::ostream* console) {
    if (m.cfg.reinit_promptformer) reinit_prefix(m, "pf.");
    RunLog log(m.cfg, "joint", console);
    Rng rng(Rng::derive(m.cfg.seed, 3));
    AdamConfig acfg;
    acfg.lr = m.cfg.learning_rate;
    std::vector<Tensor> params = m.reg.collect("fpe_con.");
    for (Tensor& t : m.reg.collect("den_lf.")) params.push_back(t);
    for (Tensor& t : m.reg.collect("den_hf.")) params.push_back(t);
    for (Tensor& t : m.reg.collect("pf.")) params.push_back(t);
    Adam opt(std::move(params), acfg);

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(m.cfg.iters_joint));
    for (int step = 1; step <= m.cfg.iters_joint; ++step) {
        GradTape tape;
        Tensor loss_l1, loss_l, loss_h;
        for (int b = 0; b < m.cfg.batch_size; ++b) {
            const BatchItem item = draw_item(data, m.cfg.patch_size, rng);
            FrequencyPromptPair p0;
            {
                NoGradScope frozen;
                p0 = target_prompts(m, item.gt, item.input);
            }
            const FrequencyPromptPair cond = cond_prompts(m, item.input);
            const int t = 1 + rng.uniform_int(m.sched.steps);
            const Tensor eps_l = draw_normal_prompt(m.cfg.model.n_p, m.cfg.model.d_p, rng);
            const Tensor eps_h = draw_normal_prompt(m.cfg.model.n_p, m.cfg.model.d_p, rng);
            const Tensor bl = diffusion_loss_term(
                p0.lf, cond.lf, t, eps_l,
                [&](const Tensor& c, const Tensor& n, int tt) {
                    return denoiser_forward(c, n, tt, m.den_lf);
                },
                m.sched);
            const Tensor bh = diffusion_loss_term(
                p0.hf, cond.hf, t, eps_h,
                [&](const Tensor& c, const Tensor& n, int tt) {
                    return denoiser_forward(c, n, tt, m.den_hf);
                },
                m.sched);

            const std::uint64_t sample_seed =
                Rng::derive(m.cfg.seed, 4000000000ull + static_cast<std::uint64_t>(step) * 64 +
                                            static_cast<std::uint64_t>(b));
            FrequencyPromptPair prompts;
            if (m.cfg.detach_prompts) {
                NoGradScope detached;
                prompts = generate_prompts(m, cond, sample_seed);
            } else {
                prompts = generate_prompts(m, cond, sample_seed);
            }
            const Tensor out = restore_image(m, item.input, prompts);
            const Tensor bl1 = l1_loss(out, item.gt);

            loss_l1 = loss_l1.defined() ? add(loss_l1, bl1) : bl1;
            loss_l = loss_l.defined() ? add(loss_l, bl) : bl;
            loss_h = loss_h.defined() ? add(loss_h, bh) : bh;
        }
        const float inv = 1.f / static_cast<float>(m.cfg.batch_size);
        loss_l1 = scale(loss_l1, inv);
        loss_l = scale(loss_l, inv);
        loss_h = scale(loss_h, inv);
        const Tensor loss = add(add(loss_l, loss_h), loss_l1);

        StepValues v;
        v.l1 = loss_l1.item();
        v.ldiff_l = loss_l.item();
        v.ldiff_h = loss_h.item();
        check_finite("joint", step, v);
        tape.backward(loss);
        opt.step();
        opt.zero_grad();
        history.push_back(v.total());
        log.log(step, m.cfg.iters_joint, v);
    }
    return finish_stage(m, "joint", m.cfg.iters_joint, std::move(history));
}

InferResult infer_file(const PromptRR& m, const std::string& input_path,
                       const std::string& out_path, std::uint64_t seed,
                       const std::string& gt_path) {
    const Tensor input = read_ppm(input_path);
    const Tensor restored = infer_image(m, input, seed);
    write_ppm(out_path, restored);

    InferResult r;
    if (!gt_path.empty()) {
        const Tensor gt = read_ppm(gt_path);
        r.psnr_in = psnr(input, gt);
        r.psnr_out = psnr(restored, gt);
        r.ssim_out = ssim(restored, gt);
        r.has_metrics = true;
    }
    return r;
}

}  // namespace promptrr
