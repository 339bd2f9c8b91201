#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pulse/dataset.hpp"
#include "pulse/rppg.hpp"
#include "pulse/trainer.hpp"

namespace pulse {

struct MaskSpec {
  double ratio = 0.75;
  int patch = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// round(ratio * n), at least one.
int masked_patch_count(double ratio, int n_patches);

/// Row-major grid of patch flags (1 = masked).
struct PatchMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> cells;

  bool masked(int r, int c) const { return cells[static_cast<std::size_t>(r) * cols + c] != 0; }
  int count() const;
};

/// Selects exactly masked_patch_count patches uniformly without replacement.
PatchMask sample_patch_mask(int rows, int cols, double ratio, std::uint64_t seed);

struct MaskedMap {
  StackedMap map;
  PatchMask layout;
};

/// Sets every channel of the selected patch x patch blocks to `fill`.
/// Throws InputError when the image does not tile into patches.
MaskedMap mask_patches(const StackedMap& map, const MaskSpec& spec, float fill = 0.0f);

/// Where masking happens: on the stacked image, or on the rows x T map
/// before stacking (edge patches may be partial).
enum class MaskStage { Stacked, Map };
/// Pretext reconstruction target.
enum class PretextMap { None, Mask, Pbvp };

struct PretextSpec {
  /// Pseudo-HR source; none trains without an HR target.
  std::optional<RppgMethod> hr_method = RppgMethod::Chrom;
  PretextMap map = PretextMap::Mask;
  RppgMethod pbvp_method = RppgMethod::Chrom;
  MaskSpec mask;
  MaskStage stage = MaskStage::Stacked;
  float mask_fill = 0.0f;

  /// "CHROM-Mask", "none-PBVP", ...
  std::string name() const;
  static PretextSpec parse(const std::string& name);
  nlohmann::json to_json() const;
};

struct PretextSample {
  /// Model input, map target rows (the unmasked MSTmap or the PBVPmap) and
  /// pseudo-HR label.
  Sample sample;
  /// Unmasked stacked target image.
  StackedMap target_map;
  /// Empty when nothing was masked.
  PatchMask mask_layout;
  PseudoLabel hr_label;
};

/// MSTmap of one window, stacked and masked; the unmasked map is the target.
PretextSample make_pretext_sample(const RoiTraceSet& window, const PretextSpec& spec, const DataConfig& data,
                                  const StackOptions& stack, std::uint64_t mask_seed);
/// Unmasked MSTmap input with the stacked PBVPmap as target.
PretextSample make_pbvp_sample(const RoiTraceSet& window, const PretextSpec& spec, const DataConfig& data,
                               const StackOptions& stack);

/// Sliding windows of every subject in an unlabeled pool. Each window gets
/// its own fixed mask seed.
std::vector<PretextSample> pretext_samples(const Benchmark& pool, const PretextSpec& spec, const DataConfig& data,
                                           const StackOptions& stack, int stride);

struct PretrainResult {
  RunReport report;
  std::filesystem::path checkpoint;
};

/// Trains one model on the pretext task and writes its checkpoint.
PretrainResult pretrain(const Benchmark& pool, const PretextSpec& spec, const ExperimentConfig& exp,
                        const std::filesystem::path& checkpoint);

/// Cross-validated training of only the HR head's final layer.
RunReport linear_probe(const std::filesystem::path& checkpoint, const Benchmark& bench, const ExperimentConfig& exp,
                       const std::string& parent_run_id = {});
/// Cross-validated training of every parameter from a checkpoint.
RunReport transfer(const std::filesystem::path& checkpoint, const Benchmark& bench, const ExperimentConfig& exp,
                   const std::string& parent_run_id = {});

std::string to_string(MaskStage s);
MaskStage mask_stage_from_string(const std::string& s);

}  // namespace pulse
