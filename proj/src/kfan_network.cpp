#include "kfan/kfan_network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "kfan/error.hpp"

namespace kfan {

namespace {

constexpr double kMeanFloor = 1e-7;

Matrix sigmoid_mat(Matrix m) {
    return m.unaryExpr([](double x) { return sigmoid(x); });
}

Matrix clamp_mean(Matrix m) {
    return m.unaryExpr(
        [](double x) { return std::clamp(x, kMeanFloor, 1.0 - kMeanFloor); });
}

// Hidden bias of branch layer l (0-based) once the stacked energies are
// summed: the layer's own hidden bias plus the next Rbm's visible bias.
Vector effective_hidden_bias(const Branch& b, std::size_t l) {
    Vector bias = b.layers[l].hidden_bias;
    if (l + 1 < b.layers.size()) bias += b.layers[l + 1].visible_bias;
    return bias;
}

template <typename DimOf>
void check_visibles(const KFanNetwork& net, std::size_t count, const DimOf& dim_of) {
    if (count != net.branches.size())
        throw DomainError("one visible input per branch is required");
    for (std::size_t b = 0; b < count; ++b)
        if (dim_of(b) != net.branches[b].layers.front().n_visible())
            throw DimensionError("visible input size mismatch on branch " +
                                 net.branches[b].spec.name);
}

struct LayerStats {
    std::vector<std::vector<Matrix>> weights;  // [branch][layer]
    std::vector<Vector> visible_bias;          // [branch], bottom Rbm only
    std::vector<std::vector<Vector>> hidden_bias;
    std::vector<Matrix> top_weights;
    Vector top_bias;
};

// Expected pairwise products and layer means under a factorized state
// (means or samples), divided by the number of columns.
LayerStats collect_stats(const KFanNetwork& net, const std::vector<Matrix>& visible_cols,
                         const MeanFieldCols& state) {
    const double inv_b = 1.0 / static_cast<double>(state.shared.cols());
    LayerStats s;
    s.weights.resize(net.branches.size());
    s.visible_bias.resize(net.branches.size());
    s.hidden_bias.resize(net.branches.size());
    s.top_weights.resize(net.branches.size());
    for (std::size_t b = 0; b < net.branches.size(); ++b) {
        const Branch& br = net.branches[b];
        const Matrix* below = &visible_cols[b];
        for (std::size_t l = 0; l < br.layers.size(); ++l) {
            const Matrix& mu = state.mu[b][l];
            s.weights[b].push_back(mu * below->transpose() * inv_b);
            s.hidden_bias[b].push_back(mu.rowwise().mean());
            if (l == 0) s.visible_bias[b] = below->rowwise().mean();
            below = &mu;
        }
        s.top_weights[b] = state.shared * below->transpose() * inv_b;
    }
    s.top_bias = state.shared.rowwise().mean();
    return s;
}

// Probability of one layer of the chain given the current values of its
// neighbors. Layer index: 0 is the visible layer, 1..depth the branch
// hidden layers; the shared layer is handled by shared_probs.
Matrix layer_probs(const KFanNetwork& net, std::size_t b, std::size_t index,
                   const std::vector<Matrix>& visible_cols,
                   const MeanFieldCols& state) {
    const Branch& br = net.branches[b];
    if (index == 0)
        return sigmoid_mat((br.layers[0].weights.transpose() * state.mu[b][0]).colwise() +
                           br.layers[0].visible_bias);
    const std::size_t l = index - 1;
    const Matrix& below = (l == 0) ? visible_cols[b] : state.mu[b][l - 1];
    Matrix pre = br.layers[l].weights * below;
    if (l + 1 < br.layers.size())
        pre += br.layers[l + 1].weights.transpose() * state.mu[b][l + 1];
    else
        pre += br.top_weights.transpose() * state.shared;
    return sigmoid_mat(pre.colwise() + effective_hidden_bias(br, l));
}

Matrix shared_probs(const KFanNetwork& net, const MeanFieldCols& state) {
    // state.shared may not exist yet (this function initializes it), so
    // the batch width comes from the branch means.
    const Eigen::Index n = state.mu.empty() ? 0 : state.mu.front().back().cols();
    Matrix pre = Matrix::Zero(net.shared_dim(), n);
    for (std::size_t b = 0; b < net.branches.size(); ++b)
        pre += net.branches[b].top_weights * state.mu[b].back();
    return sigmoid_mat(pre.colwise() + net.top_bias);
}

}  // namespace

const Branch& KFanNetwork::branch(const std::string& name) const {
    return branches[static_cast<std::size_t>(branch_index(name))];
}

Eigen::Index KFanNetwork::branch_index(const std::string& name) const {
    for (std::size_t b = 0; b < branches.size(); ++b)
        if (branches[b].spec.name == name) return static_cast<Eigen::Index>(b);
    throw DomainError("no branch named " + name);
}

Eigen::Index KFanNetwork::parameter_count() const {
    Eigen::Index n = top_bias.size();
    for (const Branch& br : branches) {
        for (const Rbm& r : br.layers)
            n += r.weights.size() + r.visible_bias.size() + r.hidden_bias.size();
        n += br.top_weights.size();
    }
    return n;
}

KFanNetwork build_kfan(const std::vector<BranchSpec>& specs, Eigen::Index shared_dim,
                       const TrainConfig& init, Rng& rng) {
    if (specs.size() < 2) throw DomainError("a fan needs at least two branches");
    if (shared_dim <= 0) throw DomainError("shared_dim must be positive");
    std::set<std::string> names;
    KFanNetwork net;
    for (const BranchSpec& spec : specs) {
        if (spec.name.empty()) throw DomainError("branch name must be non-empty");
        if (!names.insert(spec.name).second)
            throw DomainError("duplicate branch name " + spec.name);
        if (spec.visible_dim <= 0)
            throw DomainError("visible_dim must be positive");
        if (spec.hidden_sizes.empty())
            throw DomainError("each branch needs at least one hidden layer");
        Branch br;
        br.spec = spec;
        Eigen::Index below = spec.visible_dim;
        for (Eigen::Index h : spec.hidden_sizes) {
            if (h <= 0) throw DomainError("hidden layer sizes must be positive");
            br.layers.push_back(init_rbm(below, h, init.weight_init_stddev, rng));
            below = h;
        }
        br.top_weights.resize(shared_dim, below);
        if (init.weight_init_stddev == 0.0) {
            br.top_weights.setZero();
        } else {
            for (Eigen::Index c = 0; c < below; ++c)
                for (Eigen::Index r = 0; r < shared_dim; ++r)
                    br.top_weights(r, c) = init.weight_init_stddev * rng.next_gaussian();
        }
        net.branches.push_back(std::move(br));
    }
    net.top_bias = Vector::Zero(shared_dim);
    return net;
}

double joint_energy(const KFanNetwork& net, const std::vector<Vector>& visibles,
                    const MeanFieldState& hiddens) {
    check_visibles(net, visibles.size(),
                   [&](std::size_t b) { return visibles[b].size(); });
    if (hiddens.mu.size() != net.branches.size() ||
        hiddens.shared.size() != net.shared_dim())
        throw DimensionError("hidden state does not match network shape");
    double e = 0.0;
    for (std::size_t b = 0; b < net.branches.size(); ++b) {
        const Branch& br = net.branches[b];
        if (hiddens.mu[b].size() != br.layers.size())
            throw DimensionError("hidden state does not match branch depth");
        const Vector* below = &visibles[b];
        for (std::size_t l = 0; l < br.layers.size(); ++l) {
            e += energy(br.layers[l], *below, hiddens.mu[b][l]);
            below = &hiddens.mu[b][l];
        }
        e -= hiddens.shared.dot(br.top_weights * (*below));
    }
    e -= net.top_bias.dot(hiddens.shared);
    return e;
}

MeanFieldCols mean_field_posterior_cols(const KFanNetwork& net,
                                        const std::vector<Matrix>& visible_cols,
                                        const JointTrainConfig& cfg) {
    check_visibles(net, visible_cols.size(),
                   [&](std::size_t b) { return visible_cols[b].rows(); });
    const Eigen::Index n = visible_cols.empty() ? 0 : visible_cols[0].cols();
    for (const Matrix& v : visible_cols)
        if (v.cols() != n) throw DomainError("branch batches must be aligned");
    if (cfg.mf_damping < 0.0 || cfg.mf_damping >= 1.0)
        throw DomainError("mf_damping must lie in [0, 1)");

    MeanFieldCols state;
    state.mu.resize(net.branches.size());
    // Init: plain recognition pass, biases of each Rbm alone.
    for (std::size_t b = 0; b < net.branches.size(); ++b) {
        const Matrix* below = &visible_cols[b];
        for (const Rbm& r : net.branches[b].layers) {
            state.mu[b].push_back(clamp_mean(hidden_given_visible_cols(r, *below)));
            below = &state.mu[b].back();
        }
    }
    state.shared = clamp_mean(shared_probs(net, state));

    const double d = cfg.mf_damping;
    for (int sweep = 0; sweep < cfg.mf_sweeps; ++sweep) {
        double delta = 0.0;
        auto refresh = [&](Matrix& slot, const Matrix& probs) {
            Matrix next = clamp_mean(d * slot + (1.0 - d) * probs);
            double change = (next - slot).cwiseAbs().maxCoeff();
            delta = std::max(delta, n == 0 ? 0.0 : change);
            slot = std::move(next);
        };
        for (std::size_t b = 0; b < net.branches.size(); ++b)
            for (std::size_t l = 0; l < net.branches[b].layers.size(); ++l)
                refresh(state.mu[b][l], layer_probs(net, b, l + 1, visible_cols, state));
        refresh(state.shared, shared_probs(net, state));
        if (delta < cfg.mf_tolerance) break;
    }
    return state;
}

MeanFieldState mean_field_posterior(
    const KFanNetwork& net, const std::vector<Vector>& visibles,
    const JointTrainConfig& cfg,
    const std::function<void(const MeanFieldState&)>& on_sweep) {
    std::vector<Matrix> cols;
    cols.reserve(visibles.size());
    for (const Vector& v : visibles) cols.push_back(v);

    auto to_state = [&](const MeanFieldCols& c) {
        MeanFieldState s;
        s.mu.resize(c.mu.size());
        for (std::size_t b = 0; b < c.mu.size(); ++b)
            for (const Matrix& m : c.mu[b]) s.mu[b].push_back(m.col(0));
        s.shared = c.shared.col(0);
        return s;
    };

    if (!on_sweep) return to_state(mean_field_posterior_cols(net, cols, cfg));

    // Observed variant: run one sweep at a time so the caller can watch
    // the bound move. Sweep s of this loop matches sweep s of the batched
    // path exactly (same starting point, same update order).
    JointTrainConfig warm = cfg;
    warm.mf_sweeps = 0;
    MeanFieldCols state = mean_field_posterior_cols(net, cols, warm);
    const double d = cfg.mf_damping;
    for (int sweep = 0; sweep < cfg.mf_sweeps; ++sweep) {
        double delta = 0.0;
        auto refresh = [&](Matrix& slot, const Matrix& probs) {
            Matrix next = clamp_mean(d * slot + (1.0 - d) * probs);
            delta = std::max(delta, (next - slot).cwiseAbs().maxCoeff());
            slot = std::move(next);
        };
        for (std::size_t b = 0; b < net.branches.size(); ++b)
            for (std::size_t l = 0; l < net.branches[b].layers.size(); ++l)
                refresh(state.mu[b][l], layer_probs(net, b, l + 1, cols, state));
        refresh(state.shared, shared_probs(net, state));
        on_sweep(to_state(state));
        if (delta < cfg.mf_tolerance) break;
    }
    return to_state(state);
}

double elbo(const KFanNetwork& net, const std::vector<Vector>& visibles,
            const MeanFieldState& mu, double log_partition) {
    double expected_neg_energy = -joint_energy(net, visibles, mu);
    double entropy = 0.0;
    auto unit_entropy = [](double p) {
        if (!(p > 0.0 && p < 1.0))
            throw DomainError("posterior means must lie strictly inside (0, 1)");
        return -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
    };
    for (const auto& layers : mu.mu)
        for (const Vector& m : layers)
            for (Eigen::Index i = 0; i < m.size(); ++i) entropy += unit_entropy(m(i));
    for (Eigen::Index i = 0; i < mu.shared.size(); ++i)
        entropy += unit_entropy(mu.shared(i));
    return expected_neg_energy + entropy - log_partition;
}

KFanNetwork joint_cd_update(const KFanNetwork& net, const std::vector<Matrix>& batches,
                            const JointTrainConfig& cfg, Rng& rng,
                            const JointCdHooks& hooks) {
    check_visibles(net, batches.size(),
                   [&](std::size_t b) { return batches[b].cols(); });
    const Eigen::Index n = batches.empty() ? 0 : batches[0].rows();
    if (n == 0) throw DomainError("joint CD needs at least one example");
    for (const Matrix& m : batches)
        if (m.rows() != n) throw DomainError("branch batches must be aligned");
    if (cfg.cd_steps < 1) throw DomainError("cd_steps must be at least 1");

    std::vector<Matrix> cols;
    cols.reserve(batches.size());
    for (const Matrix& m : batches) cols.push_back(m.transpose());

    const MeanFieldCols posterior = mean_field_posterior_cols(net, cols, cfg);
    const LayerStats positive = collect_stats(net, cols, posterior);

    LayerStats negative;
    if (hooks.clamp_negative_to_positive) {
        negative = positive;
    } else {
        // Chain state: branch visibles plus every hidden layer. Start at
        // the mean-field solution (visibles at the data) and run
        // alternating Gibbs: even-index layers, then odd-index layers,
        // sequentially within a phase; the shared layer sits one above
        // the deepest branch.
        std::vector<Matrix> v = cols;
        MeanFieldCols chain = posterior;
        std::size_t max_depth = 0;
        for (const Branch& br : net.branches)
            max_depth = std::max(max_depth, br.layers.size());
        const std::size_t shared_index = max_depth + 1;
        for (int step = 0; step < cfg.cd_steps; ++step) {
            for (std::size_t parity = 0; parity < 2; ++parity) {
                for (std::size_t b = 0; b < net.branches.size(); ++b) {
                    const std::size_t depth = net.branches[b].layers.size();
                    for (std::size_t index = parity; index <= depth; index += 2) {
                        Matrix probs = (index == 0)
                                           ? layer_probs(net, b, 0, v, chain)
                                           : layer_probs(net, b, index, v, chain);
                        Matrix sample = sample_bernoulli(probs, rng);
                        if (index == 0)
                            v[b] = std::move(sample);
                        else
                            chain.mu[b][index - 1] = std::move(sample);
                    }
                }
                if (shared_index % 2 == parity)
                    chain.shared = sample_bernoulli(shared_probs(net, chain), rng);
            }
        }
        // Final smoothing step: replace every layer by its probability
        // given the last samples, then read the statistics off those.
        MeanFieldCols smooth = chain;
        std::vector<Matrix> v_smooth = v;
        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            v_smooth[b] = layer_probs(net, b, 0, v, chain);
            for (std::size_t l = 0; l < net.branches[b].layers.size(); ++l)
                smooth.mu[b][l] = layer_probs(net, b, l + 1, v, chain);
        }
        smooth.shared = shared_probs(net, chain);
        negative = collect_stats(net, v_smooth, smooth);
    }

    const double eta = cfg.learning_rate;
    KFanNetwork out = net;
    for (std::size_t b = 0; b < out.branches.size(); ++b) {
        Branch& br = out.branches[b];
        for (std::size_t l = 0; l < br.layers.size(); ++l) {
            br.layers[l].weights +=
                eta * (positive.weights[b][l] - negative.weights[b][l]);
            br.layers[l].hidden_bias +=
                eta * (positive.hidden_bias[b][l] - negative.hidden_bias[b][l]);
            // A layer's visible side is the data (l == 0) or the layer
            // below, whose mean difference also drives this bias.
            if (l == 0)
                br.layers[l].visible_bias +=
                    eta * (positive.visible_bias[b] - negative.visible_bias[b]);
            else
                br.layers[l].visible_bias +=
                    eta * (positive.hidden_bias[b][l - 1] - negative.hidden_bias[b][l - 1]);
            if (!br.layers[l].weights.allFinite())
                throw NumericError("joint CD produced non-finite weights");
        }
        br.top_weights += eta * (positive.top_weights[b] - negative.top_weights[b]);
        if (!br.top_weights.allFinite())
            throw NumericError("joint CD produced non-finite weights");
    }
    out.top_bias += eta * (positive.top_bias - negative.top_bias);
    return out;
}

}  // namespace kfan
