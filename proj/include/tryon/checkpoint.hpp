#ifndef TRYON_CHECKPOINT_HPP
#define TRYON_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tryon/tape.hpp"

namespace tryon {

struct NamedArray {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<float> data;
};

// Versioned archive of named float32 arrays plus trainer state.
// Round-trips bit-exactly; load rejects config-hash mismatches.
struct CheckpointManifest {
    static constexpr uint32_t kVersion = 1;
    std::string stage_name;
    std::string config_hash;
    int64_t iteration = 0;
    std::string rng_state;
    std::vector<NamedArray> arrays;  // parameters, then optimizer moments ("adam_m/...", "adam_v/...")

    void save(const std::string& path) const;
    static CheckpointManifest load(const std::string& path,
                                   const std::string& expected_config_hash = "");

    const NamedArray* find(const std::string& name) const;
};

CheckpointManifest snapshot_params(const ParamStore<float>& store, const std::string& stage_name,
                                   const std::string& config_hash, int64_t iteration,
                                   const std::string& rng_state);
// Restores values and Adam moments into a store built from the same config.
void restore_params(const CheckpointManifest& m, ParamStore<float>& store);

}  // namespace tryon

#endif
