#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kfan/kfan_network.hpp"
#include "kfan/types.hpp"

namespace kfan {

enum class Task { restore_label, multiview };

struct FineTuneConfig {
    double lambda = 1.0;  // weight of the label term in the joint loss
    Task task = Task::restore_label;
    double epsilon_clamp = 1e-7;  // floor for log arguments, in (0, 0.5)
    int max_iterations = 200;
};

/// Inputs and targets for one fine-tuning batch, one example per row.
/// restore_label reads x as input and y, z as targets; multiview reads
/// x, y as inputs and z as the target.
struct FineTuneBatch {
    Matrix x;
    Matrix y;
    Matrix z;
};

/// Maps flat vector segments back to named parameters.
struct ParamLayout {
    enum class Kind { weights, visible_bias, hidden_bias, top_weights, top_bias };
    struct Segment {
        std::string branch;  // empty for the shared bias
        Eigen::Index layer = -1;
        Kind kind = Kind::top_bias;
        Eigen::Index rows = 0, cols = 0;
        Eigen::Index offset = 0;
    };
    std::vector<BranchSpec> specs;
    Eigen::Index shared_dim = 0;
    std::vector<Segment> segments;
    Eigen::Index total = 0;
};

struct FlatParams {
    Vector values;
    ParamLayout layout;
};

ParamLayout layout_of(const KFanNetwork& net);
FlatParams flatten(const KFanNetwork& net);
KFanNetwork unflatten(const Vector& values, const ParamLayout& layout);
KFanNetwork unflatten(const FlatParams& flat);

/// Recognition pass of one branch into the shared layer: sigmoid affine
/// maps up the stack, then the branch's shared-layer projection.
Vector forward_shared_from_one(const KFanNetwork& net, const std::string& branch,
                               const Vector& v);

/// Restoration path: encode branch x fully, then decode the shared
/// activation down branches y and z with transposed weights and
/// visible-side biases. Returns (image probabilities, label probabilities).
std::pair<Vector, Vector> forward_restore(const KFanNetwork& net, const Vector& v_x);
std::pair<Matrix, Matrix> forward_restore(const KFanNetwork& net, const Matrix& v_x);

/// Two-input recognition: encode x and y, fuse their shared-layer
/// projections additively, decode down branch z.
Vector forward_multiview(const KFanNetwork& net, const Vector& v_x, const Vector& v_y);
Matrix forward_multiview(const KFanNetwork& net, const Matrix& v_x, const Matrix& v_y);

/// Bernoulli cross-entropy, predictions clamped to [eps, 1-eps], summed
/// over components, averaged over rows: restoration term plus lambda
/// times the label term.
double loss_joint(const Matrix& pred_y, const Matrix& pred_z, const Matrix& target_y,
                  const Matrix& target_z, double lambda, double eps = 1e-7);
double loss_multiview(const Matrix& pred_z, const Matrix& target_z, double eps = 1e-7);

/// Loss of cfg.task on one batch.
double finetune_loss(const KFanNetwork& net, const FineTuneBatch& batch,
                     const FineTuneConfig& cfg);

/// Exact reverse-mode gradient of the configured loss for every
/// parameter; parameters off the task's forward path get exact zeros.
FlatParams gradients(const KFanNetwork& net, const FineTuneBatch& batch,
                     const FineTuneConfig& cfg);

/// Argmax class; ties go to the lowest index.
Eigen::Index classify(const Vector& scores);
std::vector<Eigen::Index> classify_rows(const Matrix& scores);

}  // namespace kfan
