#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kfan/data.hpp"
#include "kfan/finetune.hpp"
#include "kfan/kfan_network.hpp"
#include "kfan/optim.hpp"

namespace kfan {

struct DataConfig {
    enum class Source { synth_digits, synth_multiview, idx, kmvd };
    Source source = Source::synth_digits;
    std::filesystem::path images;  // idx pixel file
    std::filesystem::path labels;  // idx label file
    std::filesystem::path file;    // kmvd record file
    Eigen::Index count = 2500;     // synthetic record count
    double ambiguity = 0.0;        // synth_multiview bit-flip rate
};

/// Everything a run needs, parsed from one config file. Unknown keys and
/// sections are rejected; every field has a default.
struct RunConfig {
    Task task = Task::restore_label;
    std::uint64_t seed = 0;

    TrainConfig pretrain;      // greedy layerwise stage
    JointTrainConfig joint;    // joint CD stage (shares pretrain's eta by default)
    int joint_epochs = 1;
    FineTuneConfig finetune;
    LbfgsConfig lbfgs;

    Eigen::Index shared_dim = 48;
    std::vector<Eigen::Index> hidden_x = {64, 32};
    std::vector<Eigen::Index> hidden_y = {64, 32};
    std::vector<Eigen::Index> hidden_z = {16};

    DataConfig data;
    NoiseConfig noise;
    double binarize_threshold = 0.5;
    int copies_per_image = 1;
    Eigen::Index train_count = 2000;
    Eigen::Index test_count = 500;
};

/// Parses the `key = value` / `[section]` grammar. Fail-closed: unknown
/// key or section, duplicate key, type mismatch, and missing required
/// pieces all raise ParseError carrying a line number.
RunConfig parse_config(const std::string& text);

/// Canonical echo of a config; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace kfan
