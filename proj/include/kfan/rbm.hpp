#pragma once

#include <cstdint>
#include <vector>

#include "kfan/rng.hpp"
#include "kfan/types.hpp"

namespace kfan {

/// One bipartite layer pair. Weights are hidden x visible, so row j of
/// `weights` holds hidden unit j's connections.
struct Rbm {
    Matrix weights;       // [n_hidden x n_visible]
    Vector visible_bias;  // [n_visible]
    Vector hidden_bias;   // [n_hidden]

    Eigen::Index n_visible() const { return weights.cols(); }
    Eigen::Index n_hidden() const { return weights.rows(); }
};

struct RbmGradient {
    Matrix d_weights;
    Vector d_visible_bias;
    Vector d_hidden_bias;
};

struct TrainConfig {
    double learning_rate = 0.1;
    int cd_steps = 1;
    int epochs = 1;
    int batch_size = 50;
    double weight_init_stddev = 0.01;
    std::uint64_t rng_seed = 0;
    double momentum = 0.0;
    double weight_decay = 0.0;
};

/// Logistic function, stable over the whole double range.
double sigmoid(double x);

/// Construct an Rbm with Gaussian(0, stddev) weights and zero biases.
/// Weight draws walk the matrix column by column.
Rbm init_rbm(Eigen::Index n_visible, Eigen::Index n_hidden, double stddev, Rng& rng);

/// -h'Wv - b'v - c'h for binary v, h.
double energy(const Rbm& rbm, const Vector& v, const Vector& h);

/// p(h_j = 1 | v) for each hidden unit; v entries may be probabilities.
Vector hidden_given_visible(const Rbm& rbm, const Vector& v);
/// p(v_i = 1 | h) for each visible unit.
Vector visible_given_hidden(const Rbm& rbm, const Vector& h);

/// Column-wise batched conditionals: each column is one example.
Matrix hidden_given_visible_cols(const Rbm& rbm, const Matrix& v_cols);
Matrix visible_given_hidden_cols(const Rbm& rbm, const Matrix& h_cols);

/// One Bernoulli sample per component; consumes exactly probs.size() draws.
Vector sample_bernoulli(const Vector& probs, Rng& rng);
/// Column-major batched form (column by column, top to bottom).
Matrix sample_bernoulli(const Matrix& probs, Rng& rng);

/// Dense expressions sample without naming a temporary; vector-shaped
/// ones pick the vector overload.
template <typename Derived>
auto sample_bernoulli(const Eigen::DenseBase<Derived>& probs, Rng& rng) {
    if constexpr (Derived::ColsAtCompileTime == 1)
        return sample_bernoulli(Vector(probs.derived()), rng);
    else
        return sample_bernoulli(Matrix(probs.derived()), rng);
}

/// Data-dependent sufficient statistics <vh'>, <v>, <h> with h taken as
/// p(h|v). Batch rows are examples.
RbmGradient positive_statistics(const Rbm& rbm, const Matrix& batch);

struct CdHooks {
    /// Test hook: evaluate the negative phase on the data itself instead of
    /// the Gibbs chain, which must produce a zero gradient.
    bool clamp_negative_to_data = false;
};

/// CD-k log-likelihood gradient estimate. Positive phase uses hidden
/// probabilities; the negative phase runs k Gibbs sweeps of sampled states
/// and finishes on probabilities.
RbmGradient cd_gradient(const Rbm& rbm, const Matrix& batch, int k, Rng& rng,
                        const CdHooks& hooks = {});

/// theta <- theta + eta * gradient (ascent on log-likelihood).
Rbm apply_update(const Rbm& rbm, const RbmGradient& grad, double eta);

/// Mini-batch CD training of a single Rbm. Epoch order is a seeded shuffle;
/// momentum and weight decay come from the config (both default 0).
Rbm train_rbm(Rbm rbm, const Matrix& data, const TrainConfig& config, Rng& rng);

/// Greedy layer-wise pretraining: layer l+1 trains on the hidden
/// probabilities of layer l applied to the data.
std::vector<Rbm> pretrain_stack(const std::vector<Eigen::Index>& layer_sizes,
                                const Matrix& data, const TrainConfig& config,
                                Rng& rng);

}  // namespace kfan
