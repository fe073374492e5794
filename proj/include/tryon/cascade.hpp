#ifndef TRYON_CASCADE_HPP
#define TRYON_CASCADE_HPP

#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tryon/checkpoint.hpp"
#include "tryon/config.hpp"
#include "tryon/datamodel.hpp"

namespace tryon {

// Desk-scale stage defaults (32 -> 64 -> 256); paper-scale budgets remain
// expressible through config files.
StageConfig desk_base_config();
StageConfig desk_sr1_config();
StageConfig desk_sr2_config();
// paper-scale architectures, for parameter accounting only
UNetConfig paper_128_config();
UNetConfig paper_256_config();

struct PipelineCheckpointSet {
    StageConfig base_cfg, sr1_cfg, sr2_cfg;
    CheckpointManifest base, sr1, sr2;
};

// Validation split: examples whose seed-stable hash lands in 1/16 of the
// space. Directories sorted by name.
struct DatasetIndex {
    std::vector<std::string> train_dirs;
    std::vector<std::string> val_dirs;
};
DatasetIndex index_dataset(const std::string& data_dir);

struct TrainLogEntry {
    int64_t iteration = 0;
    double loss = 0;
    double lr = 0;
};

// warp/blend are the sequenced-ablation halves; standard covers all stages.
enum class TrainMode { kStandard = 0, kWarp = 1, kBlend = 2 };

// Deterministic per (stage, data, seed); throws on non-finite loss with the
// iteration index in the message.
CheckpointManifest train_stage(const StageConfig& stage, const std::string& data_dir,
                               uint64_t seed, TrainMode mode = TrainMode::kStandard,
                               std::vector<TrainLogEntry>* trace = nullptr,
                               std::ostream* log = nullptr);

// Images downsampled by an integer factor, parsing nearest, poses unchanged.
TryOnExample downsample_example(const TryOnExample& e, int factor);

ImageRGB sample_pipeline(const PipelineCheckpointSet& p, const TryOnExample& example,
                         uint64_t seed);

// Base-stage-only sampling (ablation studies, warp/blend halves).
ImageRGB sample_base_stage(const StageConfig& cfg, const CheckpointManifest& ckpt,
                           const TryOnExample& example, uint64_t seed,
                           TrainMode mode = TrainMode::kStandard,
                           const ImageRGB* warped_garment = nullptr);

// Exhaustive candidate search minimizing the metric (default: validation
// FID of full-pipeline samples); ties break toward smaller levels.
using SetMetric = std::function<double(const std::vector<ImageRGB>& fake,
                                       const std::vector<ImageRGB>& real)>;
NoiseAugLevels grid_search_tna(const PipelineCheckpointSet& p,
                               const std::vector<TryOnExample>& val_examples,
                               const std::vector<double>& candidate_levels, uint64_t seed,
                               const SetMetric& metric = nullptr);

// Ablation 2: model A (warp: garment + poses -> I_wc), model B (blend:
// I_wc + agnostic + poses -> try-on).
std::pair<CheckpointManifest, CheckpointManifest> train_sequenced_ablation(
    const StageConfig& base_stage, const std::string& data_dir, uint64_t seed,
    std::ostream* log = nullptr);

// Warped-garment oracle at the given resolution (dataset dir must hold
// spec.json); renders at full resolution, then box-downsamples.
ImageRGB warped_garment_oracle(const std::string& example_dir, int res);

// Hash string stamped into stage checkpoints (config hash + train mode).
std::string checkpoint_hash_string(const StageConfig& stage, TrainMode mode);

void save_pipeline(const PipelineCheckpointSet& p, const std::string& dir);
PipelineCheckpointSet load_pipeline(const std::string& dir);

double warmup_lr(double peak_lr, int warmup_iters, int64_t iteration);

}  // namespace tryon

#endif
