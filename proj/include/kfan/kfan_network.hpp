#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "kfan/rbm.hpp"
#include "kfan/rng.hpp"
#include "kfan/types.hpp"

namespace kfan {

struct BranchSpec {
    std::string name;
    Eigen::Index visible_dim = 0;
    std::vector<Eigen::Index> hidden_sizes;  // intra-branch layers, bottom up
};

/// One pathway: a stack of Rbm layers plus the projection into the shared
/// top layer.
struct Branch {
    BranchSpec spec;
    std::vector<Rbm> layers;
    Matrix top_weights;  // [shared_dim x last hidden dim]

    Eigen::Index depth() const { return static_cast<Eigen::Index>(layers.size()); }
    Eigen::Index last_hidden_dim() const { return layers.back().n_hidden(); }
};

/// K branch stacks sharing one top hidden layer.
///
/// The joint energy sums every layer Rbm's full energy terms along each
/// stack (so a hidden layer's total bias is its own Rbm's hidden bias plus
/// the next Rbm's visible bias) plus the shared-layer couplings and the
/// single shared bias.
struct KFanNetwork {
    std::vector<Branch> branches;
    Vector top_bias;  // [shared_dim]

    Eigen::Index shared_dim() const { return top_bias.size(); }
    Eigen::Index branch_count() const { return static_cast<Eigen::Index>(branches.size()); }
    const Branch& branch(const std::string& name) const;
    Eigen::Index branch_index(const std::string& name) const;
    /// Total scalar parameter count (weights and biases).
    Eigen::Index parameter_count() const;
};

/// Factorized posterior means for every hidden layer of every branch plus
/// the shared layer.
struct MeanFieldState {
    std::vector<std::vector<Vector>> mu;  // [branch][layer]
    Vector shared;
};

/// Column-per-example form of MeanFieldState used by batched training.
struct MeanFieldCols {
    std::vector<std::vector<Matrix>> mu;
    Matrix shared;
};

struct JointTrainConfig : TrainConfig {
    int mf_sweeps = 10;
    double mf_tolerance = 1e-4;
    double mf_damping = 0.0;
};

struct JointCdHooks {
    /// Test hook: copy the positive statistics into the negative phase,
    /// which must make the update a no-op.
    bool clamp_negative_to_positive = false;
};

KFanNetwork build_kfan(const std::vector<BranchSpec>& specs, Eigen::Index shared_dim,
                       const TrainConfig& init, Rng& rng);

/// Energy of one joint binary configuration.
double joint_energy(const KFanNetwork& net, const std::vector<Vector>& visibles,
                    const MeanFieldState& hiddens);

/// Damped coordinate-ascent mean field with all visibles clamped. Sweeps
/// run bottom-up through each branch, then the shared layer; stops after
/// cfg.mf_sweeps sweeps or when the largest mean change drops below
/// cfg.mf_tolerance. Means are clamped to [1e-7, 1-1e-7].
/// `on_sweep`, when set, observes the state after every sweep.
MeanFieldState mean_field_posterior(
    const KFanNetwork& net, const std::vector<Vector>& visibles,
    const JointTrainConfig& cfg,
    const std::function<void(const MeanFieldState&)>& on_sweep = nullptr);

/// Batched mean field; column j of every matrix is example j. Matches the
/// per-example results of mean_field_posterior to rounding.
MeanFieldCols mean_field_posterior_cols(const KFanNetwork& net,
                                        const std::vector<Matrix>& visible_cols,
                                        const JointTrainConfig& cfg);

/// Variational lower bound E_q[-E] - log_partition + H(q). The partition
/// value must be supplied (only the enumeration oracle can produce it).
double elbo(const KFanNetwork& net, const std::vector<Vector>& visibles,
            const MeanFieldState& mu, double log_partition);

/// One CD step over aligned per-branch batches (rows are examples):
/// positive statistics from mean field, negative statistics from
/// cfg.cd_steps alternating Gibbs sweeps started at the mean-field state,
/// then every weight and bias moves by learning_rate times the difference.
KFanNetwork joint_cd_update(const KFanNetwork& net, const std::vector<Matrix>& batches,
                            const JointTrainConfig& cfg, Rng& rng,
                            const JointCdHooks& hooks = {});

/// Binary checkpoint ("KFAN" container); load(save(net)) is bit-exact.
void save_checkpoint(const KFanNetwork& net, const std::filesystem::path& path);
KFanNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace kfan
