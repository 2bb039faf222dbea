#pragma once

#include <filesystem>

#include "kfan/config.hpp"
#include "kfan/data.hpp"
#include "kfan/kfan_network.hpp"
#include "kfan/metrics.hpp"

namespace kfan {

/// Train/test triplets plus image geometry (zero when the x channel is
/// not an image).
struct Datasets {
    TripletDataset train;
    TripletDataset test;
    Eigen::Index height = 0;
    Eigen::Index width = 0;
};

/// Builds the run's data deterministically from the config and its seed:
/// generate or load, corrupt if the task calls for it, seeded shuffle,
/// then take train_count + test_count rows. `data_dir` resolves relative
/// dataset paths.
Datasets assemble_datasets(const RunConfig& cfg,
                           const std::filesystem::path& data_dir = {});

/// Greedy layerwise stacks per branch, one shared-layer model trained on
/// the concatenated top features, then joint CD epochs.
KFanNetwork run_pretrain(const RunConfig& cfg, const Datasets& data);

/// Full-batch L-BFGS on the configured objective.
KFanNetwork run_finetune(const RunConfig& cfg, const Datasets& data,
                         const KFanNetwork& net);

/// Test-set report: restoration PSNR (restored and noisy-input baselines)
/// plus label error for restore_label; classification error for
/// multiview.
EvalReport evaluate(const RunConfig& cfg, const Datasets& data,
                    const KFanNetwork& net);

/// Restored images for the test set, one row per example.
Matrix denoise_all(const RunConfig& cfg, const Datasets& data, const KFanNetwork& net);

/// Predicted class per test example.
std::vector<Eigen::Index> classify_all(const RunConfig& cfg, const Datasets& data,
                                       const KFanNetwork& net);

}  // namespace kfan
