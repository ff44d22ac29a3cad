#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "gmnet/errors.hpp"
#include "gmnet/params.hpp"

namespace gmnet {

// Ablation modes: plain soft-attention decoder, plus feature/attention
// normalization, plus the train-time guidance branch.
enum class Mode { SA, SA_LN, GMNET };

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::SA: return "SA";
        case Mode::SA_LN: return "SA_LN";
        case Mode::GMNET: return "GMNET";
    }
    return "SA";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "SA") return Mode::SA;
    if (s == "SA_LN") return Mode::SA_LN;
    if (s == "GMNET") return Mode::GMNET;
    throw UsageError("unknown mode \"" + s + "\" (expected SA, SA_LN or GMNET)");
}

struct ModelConfig {
    Mode mode = Mode::GMNET;
    std::size_t m = 16;        // frames per clip
    std::size_t d = 32;        // raw feature width (1536 for InceptionV4-style vectors)
    std::size_t proj = 256;    // projected feature width D'
    std::size_t embed = 256;   // word embedding width E
    std::size_t hidden = 256;  // LSTM hidden width H (also attention and fusion width)
    std::size_t vocab = 0;     // set from the vocabulary before training
    std::size_t l_max = 20;    // max encoded caption length including sentinels
    double eps_ln = 1e-5;
    std::uint64_t seed = 0;
    AdamConfig opt;
    double clip_norm = 5.0;
    // Guidance branch variants (GMNET only): feed groundtruth prefixes
    // instead of argmax predictions to the past encoder; share the main
    // decoder's LSTM/output weights instead of separate guidance ones.
    bool guidance_past_teacher = false;
    bool guidance_share_decoder = false;

    bool normalizes() const { return mode != Mode::SA; }
    bool has_guidance() const { return mode == Mode::GMNET; }
};

inline void validate(const ModelConfig& cfg) {
    if (cfg.m == 0 || cfg.d == 0 || cfg.proj == 0 || cfg.embed == 0 || cfg.hidden == 0)
        throw ConfigError("model dimensions must be positive");
    if (cfg.vocab < 5)
        throw ConfigError("vocab size must exceed the 4 reserved token ids");
    if (cfg.l_max < 3) throw ConfigError("l_max must be at least 3");
    if (cfg.eps_ln < 0.0) throw ConfigError("eps_ln must be non-negative");
    if (cfg.guidance_share_decoder && cfg.hidden != cfg.proj)
        throw ConfigError("guidance_share_decoder requires hidden == proj so the fused "
                          "feature width matches the decoder input");
}

inline void to_json(nlohmann::json& j, const ModelConfig& cfg) {
    j = nlohmann::json{{"mode", mode_name(cfg.mode)},
                       {"m", cfg.m},
                       {"d", cfg.d},
                       {"proj", cfg.proj},
                       {"embed", cfg.embed},
                       {"hidden", cfg.hidden},
                       {"vocab", cfg.vocab},
                       {"l_max", cfg.l_max},
                       {"eps_ln", cfg.eps_ln},
                       {"seed", cfg.seed},
                       {"lr", cfg.opt.lr},
                       {"beta1", cfg.opt.beta1},
                       {"beta2", cfg.opt.beta2},
                       {"eps_opt", cfg.opt.eps},
                       {"clip_norm", cfg.clip_norm},
                       {"guidance_past_teacher", cfg.guidance_past_teacher},
                       {"guidance_share_decoder", cfg.guidance_share_decoder}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& cfg) {
    cfg.mode = parse_mode(j.at("mode").get<std::string>());
    j.at("m").get_to(cfg.m);
    j.at("d").get_to(cfg.d);
    j.at("proj").get_to(cfg.proj);
    j.at("embed").get_to(cfg.embed);
    j.at("hidden").get_to(cfg.hidden);
    j.at("vocab").get_to(cfg.vocab);
    j.at("l_max").get_to(cfg.l_max);
    j.at("eps_ln").get_to(cfg.eps_ln);
    j.at("seed").get_to(cfg.seed);
    j.at("lr").get_to(cfg.opt.lr);
    j.at("beta1").get_to(cfg.opt.beta1);
    j.at("beta2").get_to(cfg.opt.beta2);
    j.at("eps_opt").get_to(cfg.opt.eps);
    j.at("clip_norm").get_to(cfg.clip_norm);
    j.at("guidance_past_teacher").get_to(cfg.guidance_past_teacher);
    j.at("guidance_share_decoder").get_to(cfg.guidance_share_decoder);
}

} // namespace gmnet
