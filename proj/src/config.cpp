#include "promptrr/config.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace promptrr {
namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) bad_value(key, value);
        return v;
    } catch (const std::invalid_argument&) {
        bad_value(key, value);
    } catch (const std::out_of_range&) {
        bad_value(key, value);
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) bad_value(key, value);
        return v;
    } catch (const std::invalid_argument&) {
        bad_value(key, value);
    } catch (const std::out_of_range&) {
        bad_value(key, value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value);
}

std::array<int, 4> parse_int4(const std::string& key, const std::string& value) {
    std::array<int, 4> out{};
    std::istringstream in(value);
    std::string part;
    int i = 0;
    while (std::getline(in, part, ',')) {
        if (i >= 4) bad_value(key, value);
        out[static_cast<std::size_t>(i++)] = static_cast<int>(parse_int(key, trim(part)));
    }
    if (i != 4) bad_value(key, value);
    return out;
}

std::string int4_str(const std::array<int, 4>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < 4; ++i) out << (i ? "," : "") << v[i];
    return out.str();
}

std::string routing_str(PromptRouting r) {
    return r == PromptRouting::lf_msa_hf_ffn ? "lf_msa_hf_ffn" : "both_everywhere";
}

PromptRouting parse_routing(const std::string& key, const std::string& value) {
    if (value == "lf_msa_hf_ffn") return PromptRouting::lf_msa_hf_ffn;
    if (value == "both_everywhere") return PromptRouting::both_everywhere;
    bad_value(key, value);
}

std::string piim_str(PiimMode m) {
    switch (m) {
        case PiimMode::full: return "full";
        case PiimMode::inject_only: return "inject_only";
        case PiimMode::off: return "off";
    }
    return "full";
}

PiimMode parse_piim(const std::string& key, const std::string& value) {
    if (value == "full") return PiimMode::full;
    if (value == "inject_only") return PiimMode::inject_only;
    if (value == "off") return PiimMode::off;
    bad_value(key, value);
}

std::string prompt_use_str(PromptUse u) {
    switch (u) {
        case PromptUse::both: return "both";
        case PromptUse::msa_only: return "msa_only";
        case PromptUse::ffn_only: return "ffn_only";
        case PromptUse::none: return "none";
    }
    return "both";
}

PromptUse parse_prompt_use(const std::string& key, const std::string& value) {
    if (value == "both") return PromptUse::both;
    if (value == "msa_only") return PromptUse::msa_only;
    if (value == "ffn_only") return PromptUse::ffn_only;
    if (value == "none") return PromptUse::none;
    bad_value(key, value);
}

std::string sampler_str(SamplerKind s) {
    return s == SamplerKind::algorithm2 ? "algorithm2" : "eq8";
}

SamplerKind parse_sampler(const std::string& key, const std::string& value) {
    if (value == "algorithm2") return SamplerKind::algorithm2;
    if (value == "eq8") return SamplerKind::eq8;
    bad_value(key, value);
}

std::string fp_str(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

}  // namespace

TrainConfig preset_config(const std::string& preset) {
    if (preset == "desk") return {};
    if (preset == "paper") {
        TrainConfig cfg;
        cfg.preset = "paper";
        cfg.iters_pretrain = 200000;
        cfg.iters_diffusion = 20000;
        cfg.iters_joint = 280000;
        cfg.batch_size = 8;
        cfg.patch_size = 128;
        cfg.model = paper_promptformer();
        return cfg;
    }
    throw std::invalid_argument("config: unknown preset '" + preset + "' (expected desk or paper)");
}

void apply_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "preset") {
        cfg = preset_config(value);
    } else if (key == "iters_pretrain") {
        cfg.iters_pretrain = static_cast<int>(parse_int(key, value));
    } else if (key == "iters_diffusion") {
        cfg.iters_diffusion = static_cast<int>(parse_int(key, value));
    } else if (key == "iters_joint") {
        cfg.iters_joint = static_cast<int>(parse_int(key, value));
    } else if (key == "batch_size") {
        cfg.batch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "patch_size") {
        cfg.patch_size = static_cast<int>(parse_int(key, value));
    } else if (key == "learning_rate") {
        cfg.learning_rate = parse_double(key, value);
    } else if (key == "weight_decay") {
        cfg.weight_decay = parse_double(key, value);
    } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "data_dir") {
        cfg.data_dir = value;
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else if (key == "log_every") {
        cfg.log_every = static_cast<int>(parse_int(key, value));
    } else if (key == "base_channels") {
        cfg.model.base_channels = static_cast<int>(parse_int(key, value));
    } else if (key == "stage_blocks") {
        cfg.model.stage_blocks = parse_int4(key, value);
    } else if (key == "stage_heads") {
        cfg.model.stage_heads = parse_int4(key, value);
    } else if (key == "n_p") {
        cfg.model.n_p = static_cast<int>(parse_int(key, value));
    } else if (key == "d_p") {
        cfg.model.d_p = static_cast<int>(parse_int(key, value));
    } else if (key == "prompt_routing") {
        cfg.model.routing = parse_routing(key, value);
    } else if (key == "trunk_piim") {
        cfg.model.trunk_piim = parse_piim(key, value);
    } else if (key == "trunk_prompt_in") {
        cfg.model.trunk_prompt_in = parse_prompt_use(key, value);
    } else if (key == "fpe_res_blocks") {
        cfg.fpe_res_blocks = static_cast<int>(parse_int(key, value));
    } else if (key == "fpe_pre_gt_only") {
        cfg.fpe_pre_gt_only = parse_bool(key, value);
    } else if (key == "timesteps") {
        cfg.timesteps = static_cast<int>(parse_int(key, value));
    } else if (key == "beta_start") {
        cfg.beta_start = parse_double(key, value);
    } else if (key == "beta_end") {
        cfg.beta_end = parse_double(key, value);
    } else if (key == "sampler") {
        cfg.sampler = parse_sampler(key, value);
    } else if (key == "detach_prompts") {
        cfg.detach_prompts = parse_bool(key, value);
    } else if (key == "reinit_promptformer") {
        cfg.reinit_promptformer = parse_bool(key, value);
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);

    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string s = trim(line);
        if (s.empty()) continue;
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: " + path + ":" + std::to_string(lineno) +
                                        ": expected 'key = value', got '" + s + "'");
        pairs.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }

    // preset re-bases everything, so apply it before the other keys
    for (const auto& [k, v] : pairs)
        if (k == "preset") base = preset_config(v);
    for (const auto& [k, v] : pairs)
        if (k != "preset") apply_config_key(base, k, v);
    return base;
}

std::string canonical_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "preset = " << cfg.preset << "\n";
    out << "iters_pretrain = " << cfg.iters_pretrain << "\n";
    out << "iters_diffusion = " << cfg.iters_diffusion << "\n";
    out << "iters_joint = " << cfg.iters_joint << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "patch_size = " << cfg.patch_size << "\n";
    out << "learning_rate = " << fp_str(cfg.learning_rate) << "\n";
    out << "weight_decay = " << fp_str(cfg.weight_decay) << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "data_dir = " << cfg.data_dir << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    out << "log_every = " << cfg.log_every << "\n";
    out << "base_channels = " << cfg.model.base_channels << "\n";
    out << "stage_blocks = " << int4_str(cfg.model.stage_blocks) << "\n";
    out << "stage_heads = " << int4_str(cfg.model.stage_heads) << "\n";
    out << "n_p = " << cfg.model.n_p << "\n";
    out << "d_p = " << cfg.model.d_p << "\n";
    out << "prompt_routing = " << routing_str(cfg.model.routing) << "\n";
    out << "trunk_piim = " << piim_str(cfg.model.trunk_piim) << "\n";
    out << "trunk_prompt_in = " << prompt_use_str(cfg.model.trunk_prompt_in) << "\n";
    out << "fpe_res_blocks = " << cfg.fpe_res_blocks << "\n";
    out << "fpe_pre_gt_only = " << (cfg.fpe_pre_gt_only ? "true" : "false") << "\n";
    out << "timesteps = " << cfg.timesteps << "\n";
    out << "beta_start = " << fp_str(cfg.beta_start) << "\n";
    out << "beta_end = " << fp_str(cfg.beta_end) << "\n";
    out << "sampler = " << sampler_str(cfg.sampler) << "\n";
    out << "detach_prompts = " << (cfg.detach_prompts ? "true" : "false") << "\n";
    out << "reinit_promptformer = " << (cfg.reinit_promptformer ? "true" : "false") << "\n";
    return out.str();
}

void validate(const TrainConfig& cfg) {
    auto positive = [](const char* what, long long v) {
        if (v <= 0)
            throw std::invalid_argument("config: " + std::string(what) + " must be positive, got " +
                                        std::to_string(v));
    };
    positive("iters_pretrain", cfg.iters_pretrain);
    positive("iters_diffusion", cfg.iters_diffusion);
    positive("iters_joint", cfg.iters_joint);
    positive("batch_size", cfg.batch_size);
    positive("patch_size", cfg.patch_size);
    positive("log_every", cfg.log_every);
    positive("base_channels", cfg.model.base_channels);
    positive("n_p", cfg.model.n_p);
    positive("d_p", cfg.model.d_p);
    positive("fpe_res_blocks", cfg.fpe_res_blocks);
    positive("timesteps", cfg.timesteps);
    for (int b : cfg.model.stage_blocks) positive("stage_blocks", b);
    for (int h : cfg.model.stage_heads) positive("stage_heads", h);
    if (cfg.patch_size % 8 != 0)
        throw std::invalid_argument(
            "config: patch_size must be divisible by 8 (three downsampling stages and the "
            "wavelet each halve the resolution), got " +
            std::to_string(cfg.patch_size));
    if (!(cfg.learning_rate > 0))
        throw std::invalid_argument("config: learning_rate must be positive");
    if (cfg.weight_decay < 0) throw std::invalid_argument("config: weight_decay must be >= 0");
    if (!(cfg.beta_start > 0 && cfg.beta_start < 1) || !(cfg.beta_end > 0 && cfg.beta_end < 1))
        throw std::invalid_argument("config: beta bounds must lie in (0, 1)");
    if (cfg.preset != "desk" && cfg.preset != "paper")
        throw std::invalid_argument("config: unknown preset '" + cfg.preset + "'");
}

}  // namespace promptrr
