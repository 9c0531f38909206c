#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairface/common.hpp"
#include "pairface/nn/patchgan.hpp"
#include "pairface/nn/unet.hpp"
#include "pairface/tensor.hpp"

namespace pairface {

// Versioned archive of named float tensors plus a JSON metadata blob.
// Little-endian f32 payload (x86 native); writes are atomic via
// write-temp-then-rename.

namespace ckpt {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

struct Archive {
    nlohmann::json meta;
    std::map<std::string, Tensor> tensors;

    const Tensor& need(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw CheckpointError("missing tensor '" + name + "'");
        return it->second;
    }
};

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw CheckpointError("truncated archive");
    return v;
}

inline void write_archive(const std::filesystem::path& path, const nlohmann::json& meta,
                          const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw CheckpointError("cannot open " + tmp.string() + " for writing");
        os.write(kMagic, 4);
        write_pod(os, kVersion);
        const std::string meta_str = meta.dump();
        write_pod(os, static_cast<std::uint32_t>(meta_str.size()));
        os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
        write_pod(os, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& [name, t] : tensors) {
            write_pod(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod(os, static_cast<std::uint32_t>(t->rank()));
            for (int d : t->shape()) write_pod(os, static_cast<std::int32_t>(d));
            os.write(reinterpret_cast<const char*>(t->data()),
                     static_cast<std::streamsize>(t->size() * sizeof(float)));
        }
        if (!os) throw CheckpointError("write failure on " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline Archive read_archive(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(kMagic, 4))
        throw CheckpointError(path.string() + " is not a checkpoint archive");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion)
        throw CheckpointError("unsupported archive version " + std::to_string(version));
    const auto meta_len = read_pod<std::uint32_t>(is);
    std::string meta_str(meta_len, '\0');
    is.read(meta_str.data(), meta_len);
    if (!is) throw CheckpointError("truncated archive metadata");
    Archive a;
    a.meta = nlohmann::json::parse(meta_str, nullptr, false);
    if (a.meta.is_discarded()) throw CheckpointError("corrupt archive metadata");
    const auto count = read_pod<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = read_pod<std::uint32_t>(is);
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(read_pod<std::int32_t>(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!is) throw CheckpointError("truncated tensor '" + name + "'");
        a.tensors.emplace(std::move(name), std::move(t));
    }
    return a;
}

}  // namespace ckpt

// ---------------------------------------------------------------------------
// Config <-> JSON
// ---------------------------------------------------------------------------

inline std::string to_string(NormKind k) { return k == NormKind::batch ? "batch" : "instance"; }

inline NormKind norm_kind_from_string(const std::string& s) {
    if (s == "batch") return NormKind::batch;
    if (s == "instance") return NormKind::instance;
    throw Error("unknown norm kind '" + s + "'");
}

inline nlohmann::json to_json(const UNetConfig& c) {
    return {{"in_channels", c.in_channels},       {"out_channels", c.out_channels},
            {"base_width", c.base_width},         {"encoder_blocks", c.encoder_blocks},
            {"decoder_blocks", c.decoder_blocks}, {"norm", to_string(c.norm)},
            {"dropout_blocks", c.dropout_blocks}, {"dropout_rate", c.dropout_rate}};
}

inline UNetConfig unet_config_from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.out_channels = j.at("out_channels").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.encoder_blocks = j.at("encoder_blocks").get<int>();
    c.decoder_blocks = j.at("decoder_blocks").get<int>();
    c.norm = norm_kind_from_string(j.at("norm").get<std::string>());
    c.dropout_blocks = j.at("dropout_blocks").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<float>();
    return c;
}

inline nlohmann::json to_json(const PatchDiscConfig& c) {
    return {{"image_channels", c.image_channels},
            {"conditional", c.conditional},
            {"layer_widths", c.layer_widths},
            {"target_rf", c.target_rf},
            {"norm", to_string(c.norm)}};
}

inline PatchDiscConfig disc_config_from_json(const nlohmann::json& j) {
    PatchDiscConfig c;
    c.image_channels = j.at("image_channels").get<int>();
    c.conditional = j.at("conditional").get<bool>();
    c.layer_widths = j.at("layer_widths").get<std::vector<int>>();
    c.target_rf = j.at("target_rf").get<int>();
    c.norm = norm_kind_from_string(j.at("norm").get<std::string>());
    return c;
}

// ---------------------------------------------------------------------------
// Model save/load
// ---------------------------------------------------------------------------

namespace detail {
template <class Model>
std::vector<std::pair<std::string, const Tensor*>> named_tensors(Model& m) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const auto& p : m.parameters()) out.emplace_back(p->name, &p->value);
    for (auto& [name, t] : m.buffers()) out.emplace_back(name, t);
    return out;
}

template <class Model>
void load_tensors(const ckpt::Archive& a, Model& m) {
    for (const auto& p : m.parameters()) {
        const Tensor& t = a.need(p->name);
        if (!t.same_shape(p->value))
            throw CheckpointError("tensor '" + p->name + "' shape differs from model");
        p->value = t;
    }
    for (auto& [name, buf] : m.buffers()) {
        const Tensor& t = a.need(name);
        if (!t.same_shape(*buf)) throw CheckpointError("buffer '" + name + "' shape differs");
        *buf = t;
    }
}
}  // namespace detail

inline void save_generator(const std::filesystem::path& path, Generator& g,
                           const std::string& tag = "generator") {
    nlohmann::json meta{{"tag", tag}, {"unet", to_json(g.config())}};
    ckpt::write_archive(path, meta, detail::named_tensors(g));
}

// Loads into an existing generator; configs must match exactly.
inline void load_generator(const std::filesystem::path& path, Generator& g,
                           const std::string& expected_tag = "generator") {
    ckpt::Archive a = ckpt::read_archive(path);
    if (a.meta.value("tag", "") != expected_tag)
        throw CheckpointError(path.string() + ": tag is not '" + expected_tag + "'");
    if (to_json(g.config()) != a.meta.at("unet"))
        throw CheckpointError(path.string() + ": generator config mismatch");
    detail::load_tensors(a, g);
}

// Constructs a generator from archive metadata alone.
inline Generator load_generator(const std::filesystem::path& path,
                                const std::string& expected_tag = "generator") {
    ckpt::Archive a = ckpt::read_archive(path);
    if (a.meta.value("tag", "") != expected_tag)
        throw CheckpointError(path.string() + ": tag is not '" + expected_tag + "'");
    Generator g(unet_config_from_json(a.meta.at("unet")), std::mt19937_64(0), std::mt19937_64(1));
    detail::load_tensors(a, g);
    return g;
}

inline void save_discriminator(const std::filesystem::path& path, PatchDiscriminator& d) {
    nlohmann::json meta{{"tag", "discriminator"}, {"disc", to_json(d.config())}};
    ckpt::write_archive(path, meta, detail::named_tensors(d));
}

inline PatchDiscriminator load_discriminator(const std::filesystem::path& path) {
    ckpt::Archive a = ckpt::read_archive(path);
    if (a.meta.value("tag", "") != "discriminator")
        throw CheckpointError(path.string() + ": tag is not 'discriminator'");
    PatchDiscriminator d(disc_config_from_json(a.meta.at("disc")), std::mt19937_64(0));
    detail::load_tensors(a, d);
    return d;
}

// Loads a g1/g2 pair into a pairwise assembly. With sharing enabled the two
// archives must agree bitwise on the shared blocks; the invariant is
// validated before the (aliased) storage is overwritten.
inline void load_pairwise(const std::filesystem::path& g1_path,
                          const std::filesystem::path& g2_path, PairwiseGenerator& pg) {
    ckpt::Archive a1 = ckpt::read_archive(g1_path);
    ckpt::Archive a2 = ckpt::read_archive(g2_path);
    for (const auto* a : {&a1, &a2})
        if (a->meta.value("tag", "") != "generator")
            throw CheckpointError("pairwise checkpoint: tag is not 'generator'");
    if (to_json(pg.left().config()) != a1.meta.at("unet") ||
        to_json(pg.right().config()) != a2.meta.at("unet"))
        throw CheckpointError("pairwise checkpoint: generator config mismatch");
    if (pg.sharing_enabled()) {
        for (const auto& p : pg.left().parameters()) {
            // shared params exist under the same name in both archives
            auto it2 = a2.tensors.find(p->name);
            if (it2 == a2.tensors.end()) continue;
            bool shared = false;
            for (const auto& q : pg.right().parameters())
                if (q.get() == p.get()) shared = true;
            if (!shared) continue;
            const Tensor& t1 = a1.need(p->name);
            const Tensor& t2 = it2->second;
            for (std::size_t i = 0; i < t1.size(); ++i)
                if (t1[i] != t2[i])
                    throw CheckpointError("pairwise checkpoint: shared block '" + p->name +
                                          "' differs between g1 and g2");
        }
    }
    detail::load_tensors(a1, pg.left());
    detail::load_tensors(a2, pg.right());
    if (pg.sharing_enabled()) pg.sync_shared_blocks();
}

}  // namespace pairface
