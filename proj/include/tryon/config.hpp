#ifndef TRYON_CONFIG_HPP
#define TRYON_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tryon/diffcore.hpp"

namespace tryon {

enum class UNetVariant { kParallel = 0, kEfficientSR = 1, kConcat = 2 };

struct UNetConfig {
    std::vector<int> resolutions;             // descending
    std::vector<int> channels;                // per resolution
    std::vector<int> block_repeats;           // per resolution
    std::vector<int> attention_resolutions;   // subset of resolutions
    int garment_stop_resolution = 0;          // decoder early stop for the garment stream
    int num_heads = 4;
    int pose_embed_dim = 32;
    int emb_dim = 256;                        // combined 1D embedding width
    UNetVariant variant = UNetVariant::kParallel;
    bool use_agnostic = true;                 // person stream sees I_a
    bool use_low_res = false;                 // SR stages concat upsampled low-res

    int levels() const { return static_cast<int>(resolutions.size()); }
    int head_dim(int level) const { return channels[size_t(level)] / num_heads; }
    bool attention_at(int res) const {
        for (int r : attention_resolutions)
            if (r == res) return true;
        return false;
    }
    // channels the person stream's first conv consumes
    int person_in_channels() const;
    bool has_garment_stream() const { return variant == UNetVariant::kParallel; }
    bool has_pose() const { return variant != UNetVariant::kEfficientSR; }

    // throws std::invalid_argument on any broken invariant
    void validate() const;
    std::string canonical() const;  // stable serialization for hashing
};

struct TrainConfig {
    int batch_size = 16;
    int iterations = 3000;
    int warmup_iters = 300;
    double peak_lr = 1e-4;
    double dropout_p = 0.1;
    bool ema = false;  // accepted but off by default
};

struct StageConfig {
    std::string name;            // base | sr1 | sr2
    int target_resolution = 32;
    int input_resolution = 0;    // SR stages: resolution of the conditioning image
    UNetConfig unet;
    SamplerSpec sampler;
    TrainConfig train;
    NoiseAugLevels inference_t_na;

    void validate() const;
    std::string canonical() const;
    uint64_t config_hash() const;
};

// Flat key=value text; '#' starts a comment; unknown keys are errors.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
StageConfig load_stage_config(const std::string& path);
StageConfig stage_config_from_kv(const std::map<std::string, std::string>& kv);
std::string stage_config_to_kv(const StageConfig& sc);  // parseable round-trip
void save_stage_config(const StageConfig& sc, const std::string& path);

}  // namespace tryon

#endif
