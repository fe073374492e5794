#include "tryon/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tryon {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'Y', 'C', 'K', 'P', 'T', '\0'};

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& os, const std::string& s) {
    write_i64(os, static_cast<int64_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
int64_t read_i64(std::istream& is) {
    int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::string read_str(std::istream& is) {
    const int64_t n = read_i64(is);
    if (n < 0 || n > (1 << 24)) throw std::runtime_error("checkpoint: corrupt string length");
    std::string s(static_cast<size_t>(n), '\0');
    is.read(s.data(), n);
    return s;
}

}  // namespace

void CheckpointManifest::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    write_str(os, stage_name);
    write_str(os, config_hash);
    write_i64(os, iteration);
    write_str(os, rng_state);
    write_i64(os, static_cast<int64_t>(arrays.size()));
    for (const auto& a : arrays) {
        write_str(os, a.name);
        write_i64(os, static_cast<int64_t>(a.shape.size()));
        for (int64_t d : a.shape) write_i64(os, d);
        write_i64(os, static_cast<int64_t>(a.data.size()));
        os.write(reinterpret_cast<const char*>(a.data.data()),
                 static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

CheckpointManifest CheckpointManifest::load(const std::string& path,
                                            const std::string& expected_config_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error(path + ": not a checkpoint archive");
    CheckpointManifest m;
    const uint32_t ver = read_u32(is);
    if (ver != kVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(ver));
    m.stage_name = read_str(is);
    m.config_hash = read_str(is);
    m.iteration = read_i64(is);
    m.rng_state = read_str(is);
    const int64_t n = read_i64(is);
    if (n < 0 || n > (1 << 20)) throw std::runtime_error(path + ": corrupt archive");
    m.arrays.resize(static_cast<size_t>(n));
    for (auto& a : m.arrays) {
        a.name = read_str(is);
        const int64_t rank = read_i64(is);
        if (rank < 0 || rank > 8) throw std::runtime_error(path + ": corrupt shape");
        a.shape.resize(static_cast<size_t>(rank));
        int64_t count = 1;
        for (auto& d : a.shape) {
            d = read_i64(is);
            count *= d;
        }
        const int64_t sz = read_i64(is);
        if (sz != count) throw std::runtime_error(path + ": shape/data size mismatch");
        a.data.resize(static_cast<size_t>(sz));
        is.read(reinterpret_cast<char*>(a.data.data()),
                static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    }
    if (!is) throw std::runtime_error(path + ": truncated archive");
    if (!expected_config_hash.empty() && m.config_hash != expected_config_hash)
        throw std::runtime_error(path + ": config hash mismatch (archive " + m.config_hash +
                                 ", expected " + expected_config_hash + ")");
    return m;
}

const NamedArray* CheckpointManifest::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

CheckpointManifest snapshot_params(const ParamStore<float>& store, const std::string& stage_name,
                                   const std::string& config_hash, int64_t iteration,
                                   const std::string& rng_state) {
    CheckpointManifest m;
    m.stage_name = stage_name;
    m.config_hash = config_hash;
    m.iteration = iteration;
    m.rng_state = rng_state;
    for (const auto& p : store) {
        m.arrays.push_back({p.name, p.value.shape, p.value.data});
        m.arrays.push_back({"adam_m/" + p.name, p.m.shape, p.m.data});
        m.arrays.push_back({"adam_v/" + p.name, p.v.shape, p.v.data});
    }
    return m;
}

void restore_params(const CheckpointManifest& m, ParamStore<float>& store) {
    for (auto& p : store) {
        const NamedArray* a = m.find(p.name);
        if (!a) throw std::runtime_error("checkpoint: missing array " + p.name);
        if (a->shape != p.value.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
        p.value.data = a->data;
        if (const NamedArray* am = m.find("adam_m/" + p.name)) p.m.data = am->data;
        if (const NamedArray* av = m.find("adam_v/" + p.name)) p.v.data = av->data;
    }
}

}  // namespace tryon
