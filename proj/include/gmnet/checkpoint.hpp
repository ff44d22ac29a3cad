#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmnet/config.hpp"
#include "gmnet/corpus.hpp"
#include "gmnet/io.hpp"
#include "gmnet/model.hpp"

namespace gmnet {

// GMCK checkpoint layout:
//   magic "GMCK", format version u32,
//   config record: byte length u32 + UTF-8 JSON (model config + token list),
//   then per-parameter records until EOF:
//     name length u16 + name + rank u32 + dims u32 each + f64 payload,
//   all integers and floats little-endian. Doubles round-trip bit-exactly.
inline constexpr std::uint32_t kGmckVersion = 1;

struct Checkpoint {
    ModelConfig cfg;
    Vocabulary vocab;
    ParamStore params;
};

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            const ModelConfig& cfg, const Vocabulary& vocab) {
    nlohmann::json j = cfg;
    j["tokens"] = vocab.tokens();
    const std::string config_record = j.dump();

    BinaryWriter w(path);
    w.str("GMCK");
    w.u32(kGmckVersion);
    w.u32(static_cast<std::uint32_t>(config_record.size()));
    w.str(config_record);
    for (const auto& name : params.names()) {
        const Tensor& t = params.value(name);
        if (name.size() > std::numeric_limits<std::uint16_t>::max())
            throw ConfigError("parameter name too long: " + name);
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (std::size_t i = 0; i < t.numel(); ++i) w.f64(t[i]);
    }
    w.close();
}

inline Checkpoint load_checkpoint(const std::string& path,
                                  std::optional<Mode> expect_mode = std::nullopt) {
    BinaryReader r(path);
    r.expect_magic("GMCK");
    const std::uint32_t version = r.u32();
    if (version != kGmckVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t config_len = r.u32();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(r.str(config_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": bad config record: " + e.what());
    }

    Checkpoint out;
    try {
        out.cfg = j.get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": incomplete config record: " + e.what());
    }
    if (expect_mode && out.cfg.mode != *expect_mode)
        throw FormatError(path + ": checkpoint mode is " + mode_name(out.cfg.mode) +
                          ", expected " + mode_name(*expect_mode));
    if (!j.contains("tokens"))
        throw FormatError(path + ": config record lacks the token list");
    const auto tokens = j["tokens"].get<std::vector<std::string>>();
    if (tokens.size() != out.cfg.vocab)
        throw FormatError(path + ": token list length does not match vocab size");
    for (std::size_t i = 0; i < std::min<std::size_t>(4, tokens.size()); ++i) {
        if (tokens[i] != out.vocab.token_of(static_cast<int>(i)))
            throw FormatError(path + ": reserved token " + std::to_string(i) +
                              " is \"" + tokens[i] + "\"");
    }
    for (std::size_t i = 4; i < tokens.size(); ++i) out.vocab.add_token(tokens[i]);
    if (out.vocab.size() != tokens.size())
        throw FormatError(path + ": duplicate tokens in checkpoint vocabulary");

    while (!r.at_eof()) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        if (rank < 1 || rank > 2)
            throw FormatError(path + ": parameter " + name + " has unsupported rank " +
                              std::to_string(rank));
        std::vector<std::size_t> shape;
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape.push_back(r.u32());
            count *= shape.back();
        }
        if (count > (1u << 30))
            throw FormatError(path + ": parameter " + name + " declares an implausible size");
        Tensor t(shape);
        for (std::size_t i = 0; i < count; ++i) t[i] = r.f64();
        out.params.add(name, std::move(t));
    }

    // The stored parameter set must be exactly what the config's mode
    // declares, in declaration order.
    const auto specs = build_param_specs(out.cfg);
    const auto names = out.params.names();
    if (names.size() != specs.size())
        throw FormatError(path + ": expected " + std::to_string(specs.size()) +
                          " parameters for mode " + mode_name(out.cfg.mode) + ", found " +
                          std::to_string(names.size()));
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (names[i] != specs[i].name)
            throw FormatError(path + ": parameter " + std::to_string(i) + " is " + names[i] +
                              ", expected " + specs[i].name);
        if (out.params.value(names[i]).shape() != specs[i].shape)
            throw FormatError(path + ": parameter " + names[i] + " has shape " +
                              out.params.value(names[i]).shape_string() + ", expected " +
                              Tensor::shape_string(specs[i].shape));
    }
    return out;
}

} // namespace gmnet
