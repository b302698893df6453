// Command-line front end: dataset synthesis, the three training stages,
// inference, image metrics, and the gradient audit.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "promptrr/gradcheck.hpp"
#include "promptrr/metrics.hpp"
#include "promptrr/image_io.hpp"
#include "promptrr/trainer.hpp"

using namespace promptrr;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::string data_dir;
    std::int64_t seed = -1;  // -1: keep the config's seed
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "key = value config file");
    cmd->add_option("--preset", a.preset, "base preset before overrides")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--seed", a.seed, "override the run seed");
    cmd->add_option("--out-dir", a.out_dir, "checkpoints and metrics go here");
    cmd->add_option("--data-dir", a.data_dir, "directory holding training pairs");
}

TrainConfig resolve_config(const CommonArgs& a) {
    TrainConfig cfg = preset_config(a.preset.empty() ? "desk" : a.preset);
    if (!a.config_path.empty()) cfg = load_config(a.config_path, cfg);
    if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
    if (!a.data_dir.empty()) cfg.data_dir = a.data_dir;
    validate(cfg);
    return cfg;
}

void print_summary(const StageResult& r) {
    std::printf("%s done: initial %.6f, final %.6f\n", r.stage.c_str(), r.initial_loss,
                r.final_loss);
    std::printf("checkpoint: %s\n", r.checkpoint_path.c_str());
}

int run_stage(const CommonArgs& args, const std::string& stage, const std::string& init_ckpt) {
    const TrainConfig cfg = resolve_config(args);
    PromptRR m = build_model(cfg);
    if (!init_ckpt.empty()) {
        const CheckpointMeta meta = load_stage_checkpoint(m, init_ckpt);
        std::printf("loaded %s (stage %s, iteration %d)\n", init_ckpt.c_str(), meta.stage.c_str(),
                    meta.iteration);
    }
    const TrainSet data = load_train_set(cfg.data_dir);
    std::printf("training on %zu pairs from %s\n", data.pairs.size(), cfg.data_dir.c_str());
    StageResult r;
    if (stage == "pretrain")
        r = stage_pretrain(m, data, &std::cout);
    else if (stage == "diffusion")
        r = stage_diffusion(m, data, &std::cout);
    else
        r = stage_joint(m, data, &std::cout);
    print_summary(r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PromptRR reflection removal: synthesis, training, inference"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic reflection dataset");
    std::string synth_dir = "data";
    int synth_count = 4, synth_size = 64;
    std::uint64_t synth_seed = 7;
    synth->add_option("--out-dir", synth_dir, "dataset directory");
    synth->add_option("--count", synth_count, "number of pairs")->check(CLI::PositiveNumber);
    synth->add_option("--size", synth_size, "square image side")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "generator seed");

    // training stages
    CommonArgs pre_args, dif_args, joint_args;
    std::string dif_init, joint_init;
    auto* pre = app.add_subcommand("pretrain", "stage 1: restorer on encoded prompts");
    add_common(pre, pre_args);
    auto* dif = app.add_subcommand("train-diffusion", "stage 2: prompt denoisers");
    add_common(dif, dif_args);
    dif->add_option("--init", dif_init, "starting checkpoint (default <out-dir>/pretrain.ckpt)");
    auto* joint = app.add_subcommand("train-joint", "stage 3: end-to-end with sampled prompts");
    add_common(joint, joint_args);
    joint->add_option("--init", joint_init,
                      "starting checkpoint (default <out-dir>/diffusion.ckpt)");

    // infer
    CommonArgs inf_args;
    std::string inf_input, inf_output, inf_ckpt, inf_gt;
    auto* inf = app.add_subcommand("infer", "restore one image");
    add_common(inf, inf_args);
    inf->add_option("--input", inf_input, "input PPM")->required();
    inf->add_option("--output", inf_output, "restored PPM")->required();
    inf->add_option("--ckpt", inf_ckpt, "trained checkpoint (omit for the raw init)");
    inf->add_option("--gt", inf_gt, "reference image; prints PSNR/SSIM when given");

    // eval
    std::string eval_a, eval_b;
    auto* ev = app.add_subcommand("eval", "PSNR/SSIM between two images");
    ev->add_option("restored", eval_a, "image under test")->required();
    ev->add_option("reference", eval_b, "ground truth")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    GradcheckOptions gopt;
    gc->add_option("--seed", gopt.seed, "audit seed");
    gc->add_option("--max-coords", gopt.max_coords, "sampled coordinates");
    gc->add_option("--step", gopt.step, "relative step size");
    gc->add_option("--tol", gopt.tol, "relative error bound");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            write_pair_dataset(synth_dir, synth_count, synth_size, synth_size, SynthSpec{},
                               synth_seed);
            std::printf("wrote %d pairs (%dx%d) under %s\n", synth_count, synth_size, synth_size,
                        synth_dir.c_str());
            return 0;
        }
        if (*pre) return run_stage(pre_args, "pretrain", "");
        if (*dif) {
            const TrainConfig cfg = resolve_config(dif_args);
            const std::string init =
                dif_init.empty() ? stage_checkpoint_path(cfg, "pretrain") : dif_init;
            return run_stage(dif_args, "diffusion", init);
        }
        if (*joint) {
            const TrainConfig cfg = resolve_config(joint_args);
            const std::string init =
                joint_init.empty() ? stage_checkpoint_path(cfg, "diffusion") : joint_init;
            return run_stage(joint_args, "joint", init);
        }
        if (*inf) {
            // without --preset/--config, take the layout from the checkpoint
            if (!inf_ckpt.empty() && inf_args.preset.empty() && inf_args.config_path.empty())
                inf_args.preset = read_checkpoint_meta(inf_ckpt).preset;
            const TrainConfig cfg = resolve_config(inf_args);
            PromptRR m = build_model(cfg);
            if (!inf_ckpt.empty()) load_stage_checkpoint(m, inf_ckpt);
            const std::uint64_t seed =
                inf_args.seed >= 0 ? static_cast<std::uint64_t>(inf_args.seed) : cfg.seed;
            const InferResult r = infer_file(m, inf_input, inf_output, seed, inf_gt);
            std::printf("wrote %s\n", inf_output.c_str());
            if (r.has_metrics)
                std::printf("PSNR in %.4f dB, PSNR out %.4f dB, SSIM %.6f\n", r.psnr_in,
                            r.psnr_out, r.ssim_out);
            return 0;
        }
        if (*ev) {
            const Tensor a = read_ppm(eval_a);
            const Tensor b = read_ppm(eval_b);
            std::printf("PSNR %.4f dB\n", psnr(a, b));
            std::printf("SSIM %.6f\n", ssim(a, b));
            return 0;
        }
        if (*gc) {
            const GradcheckReport r = run_gradcheck(gopt, &std::cout);
            return r.passed() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
