#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsdiff/diffusion.hpp"
#include "rsdiff/errors.hpp"
#include "rsdiff/net.hpp"

namespace rsdiff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Reflected IEEE CRC-32 (poly 0xEDB88320) over the payload bytes.
inline std::uint32_t crc32(const unsigned char* data, std::size_t n,
                           std::uint32_t crc = 0xFFFFFFFFu) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc;
}

inline std::uint32_t crc32_final(std::uint32_t crc) { return crc ^ 0xFFFFFFFFu; }

struct CheckpointMeta {
    NetConfig net;
    int T = 15;
    double kappa = 1.0;
    double power = 2.0;
    std::string train_hash;  // hash of the non-io config sections
    std::string mode = "traditional";
    std::int64_t step = 0;
    std::uint64_t seed = 0;
};

namespace ckptdetail {

inline nlohmann::json header_json(const CheckpointMeta& meta, const NetParams& p) {
    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["net"] = {{"image_channels", meta.net.image_channels},
                {"base_channels", meta.net.base_channels},
                {"depth", meta.net.depth},
                {"kernel", meta.net.kernel}};
    j["schedule"] = {{"T", meta.T}, {"kappa", meta.kappa}, {"power", meta.power}};
    j["train_hash"] = meta.train_hash;
    j["mode"] = meta.mode;
    j["step"] = meta.step;
    j["seed"] = meta.seed;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : p.tensors) {
        tensors.push_back({{"name", t.name},
                           {"c", t.value.shape().c},
                           {"h", t.value.shape().h},
                           {"w", t.value.shape().w}});
    }
    j["tensors"] = tensors;
    return j;
}

inline void append_f32(std::vector<unsigned char>& buf, const Tensorf& t) {
    const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(float);
    const std::size_t off = buf.size();
    buf.resize(off + bytes);
    std::memcpy(buf.data() + off, t.data(), bytes);
}

}  // namespace ckptdetail

// Layout: magic "CDIF", format version u32 LE, header length u32 LE, UTF-8
// JSON header, then the f32 LE payload (all weights, then all EMA shadows,
// then Adam m, then Adam v, in tensor order), then CRC-32 of the payload.
inline void save_checkpoint(const std::filesystem::path& path, const NetParams& p,
                            const CheckpointMeta& meta_in) {
    CheckpointMeta meta = meta_in;
    meta.step = p.step;
    const std::string header = ckptdetail::header_json(meta, p).dump();

    std::vector<unsigned char> payload;
    payload.reserve(static_cast<std::size_t>(p.weight_count()) * 4 * sizeof(float));
    for (const auto& t : p.tensors) ckptdetail::append_f32(payload, t.value);
    for (const auto& t : p.tensors) ckptdetail::append_f32(payload, t.ema);
    for (const auto& t : p.tensors) ckptdetail::append_f32(payload, t.adam_m);
    for (const auto& t : p.tensors) ckptdetail::append_f32(payload, t.adam_v);
    const std::uint32_t crc = crc32_final(crc32(payload.data(), payload.size()));

    // Atomic publish: write a sibling temp file, then rename over the target.
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("save_checkpoint: cannot open " + tmp.string());
        os.write("CDIF", 4);
        iodetail::put_u32(os, kCheckpointVersion);
        iodetail::put_u32(os, static_cast<std::uint32_t>(header.size()));
        os.write(header.data(), static_cast<std::streamsize>(header.size()));
        os.write(reinterpret_cast<const char*>(payload.data()),
                 static_cast<std::streamsize>(payload.size()));
        iodetail::put_u32(os, crc);
        if (!os) throw IoError("save_checkpoint: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
    NetParams params;
    CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "CDIF", 4) != 0)
        throw ParseError(path.string() + ": not a checkpoint (bad magic)");
    const std::uint32_t version = iodetail::get_u32(is, path.string(), "format version");
    if (version != kCheckpointVersion)
        throw VersionError(path.string() + ": checkpoint format version " +
                           std::to_string(version) + ", this build reads version " +
                           std::to_string(kCheckpointVersion));
    const std::uint32_t header_len = iodetail::get_u32(is, path.string(), "header length");
    std::string header(header_len, '\0');
    if (!is.read(header.data(), header_len))
        throw TruncationError(path.string() + ": truncated checkpoint header");

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
    }

    CheckpointMeta meta;
    try {
        meta.net.image_channels = j.at("net").at("image_channels").get<int>();
        meta.net.base_channels = j.at("net").at("base_channels").get<int>();
        meta.net.depth = j.at("net").at("depth").get<int>();
        meta.net.kernel = j.at("net").at("kernel").get<int>();
        meta.T = j.at("schedule").at("T").get<int>();
        meta.kappa = j.at("schedule").at("kappa").get<double>();
        meta.power = j.at("schedule").at("power").get<double>();
        meta.train_hash = j.at("train_hash").get<std::string>();
        meta.mode = j.at("mode").get<std::string>();
        meta.step = j.at("step").get<std::int64_t>();
        meta.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": incomplete checkpoint header: " + e.what());
    }

    RngState dummy = seeded_rng(0);
    NetParams p = net_init<float>(meta.net, dummy);
    p.step = meta.step;

    const std::size_t payload_bytes =
        static_cast<std::size_t>(p.weight_count()) * 4 * sizeof(float);
    std::vector<unsigned char> payload(payload_bytes);
    if (!is.read(reinterpret_cast<char*>(payload.data()),
                 static_cast<std::streamsize>(payload_bytes)))
        throw TruncationError(path.string() + ": truncated payload, expected " +
                              std::to_string(payload_bytes) + " bytes");
    const std::uint32_t stored_crc = iodetail::get_u32(is, path.string(), "payload checksum");
    const std::uint32_t actual_crc = crc32_final(crc32(payload.data(), payload.size()));
    if (stored_crc != actual_crc)
        throw CrcError(path.string() + ": payload checksum mismatch");

    std::size_t off = 0;
    auto take = [&](Tensorf& t) {
        const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(float);
        std::memcpy(t.data(), payload.data() + off, bytes);
        off += bytes;
    };
    for (auto& t : p.tensors) take(t.value);
    for (auto& t : p.tensors) take(t.ema);
    for (auto& t : p.tensors) take(t.adam_m);
    for (auto& t : p.tensors) take(t.adam_v);
    return {std::move(p), std::move(meta)};
}

}  // namespace rsdiff
