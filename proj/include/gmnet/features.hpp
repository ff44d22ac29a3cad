#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gmnet/errors.hpp"
#include "gmnet/io.hpp"
#include "gmnet/tensor.hpp"

namespace gmnet {

// m frame feature vectors of width D for one clip.
struct FeatureClip {
    std::string clip_id;
    Tensor features;  // [m x D]

    std::size_t frames() const { return features.rows(); }
    std::size_t dims() const { return features.cols(); }
};

// GMNF binary layout:
//   magic "GMNF", version u32, clip count u32, m u32, D u32,
//   per clip: id length u16 + UTF-8 id + m*D little-endian f32.
inline constexpr std::uint32_t kGmnfVersion = 1;

inline void save_features(const std::string& path, const std::vector<FeatureClip>& clips) {
    if (clips.empty()) throw UsageError("save_features: no clips");
    const std::size_t m = clips[0].frames();
    const std::size_t d = clips[0].dims();
    for (const auto& c : clips) {
        if (c.features.rank() != 2 || c.frames() != m || c.dims() != d)
            throw DataError("save_features: clip " + c.clip_id + " has shape " +
                            c.features.shape_string() + ", expected [" + std::to_string(m) +
                            "x" + std::to_string(d) + "]");
        if (!c.features.all_finite())
            throw NumericError("save_features: non-finite value in clip " + c.clip_id);
        if (c.clip_id.size() > std::numeric_limits<std::uint16_t>::max())
            throw DataError("save_features: clip id too long");
    }
    BinaryWriter w(path);
    w.str("GMNF");
    w.u32(kGmnfVersion);
    w.u32(static_cast<std::uint32_t>(clips.size()));
    w.u32(static_cast<std::uint32_t>(m));
    w.u32(static_cast<std::uint32_t>(d));
    for (const auto& c : clips) {
        w.u16(static_cast<std::uint16_t>(c.clip_id.size()));
        w.str(c.clip_id);
        for (std::size_t i = 0; i < c.features.numel(); ++i)
            w.f32(static_cast<float>(c.features[i]));
    }
    w.close();
}

inline std::vector<FeatureClip> load_features(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic("GMNF");
    const std::uint32_t version = r.u32();
    if (version != kGmnfVersion)
        throw FormatError(path + ": unsupported GMNF version " + std::to_string(version) +
                          " at offset 4");
    const std::uint32_t count = r.u32();
    const std::uint32_t m = r.u32();
    const std::uint32_t d = r.u32();
    if (m == 0 || d == 0)
        throw FormatError(path + ": zero frame count or feature width in header");
    std::vector<FeatureClip> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        FeatureClip clip;
        const std::uint16_t idlen = r.u16();
        clip.clip_id = r.str(idlen);
        clip.features = Tensor({m, d});
        for (std::size_t j = 0; j < clip.features.numel(); ++j) {
            const std::size_t off = r.offset();
            const float v = r.f32();
            if (!std::isfinite(v))
                throw FormatError(path + ": non-finite feature value at offset " +
                                  std::to_string(off));
            clip.features[j] = static_cast<double>(v);
        }
        out.push_back(std::move(clip));
    }
    if (!r.at_eof())
        throw FormatError(path + ": trailing bytes at offset " + std::to_string(r.offset()));
    return out;
}

} // namespace gmnet
