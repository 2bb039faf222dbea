#include "kfan/finetune.hpp"

#include <algorithm>
#include <cmath>

#include "kfan/error.hpp"
#include "kfan/rbm.hpp"

namespace kfan {

namespace {

Matrix sigmoid_mat(Matrix m) {
    return m.unaryExpr([](double x) { return sigmoid(x); });
}

void check_eps(double eps) {
    if (!(eps > 0.0 && eps < 0.5))
        throw DomainError("epsilon_clamp must lie in (0, 0.5)");
}

void check_binary_targets(const Matrix& t, const char* name) {
    for (Eigen::Index j = 0; j < t.cols(); ++j)
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            if (t(i, j) != 0.0 && t(i, j) != 1.0)
                throw DomainError(std::string(name) + " targets must be 0 or 1");
}

// Cross-entropy of clamped predictions, summed over rows (components),
// for column-per-example matrices. Caller divides by the batch size.
// Each log argument is floored at eps, so a prediction that already
// equals its binary target contributes exactly zero.
double ce_sum(const Matrix& pred, const Matrix& target, double eps) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw DimensionError("prediction/target shape mismatch");
    double total = 0.0;
    for (Eigen::Index j = 0; j < pred.cols(); ++j)
        for (Eigen::Index i = 0; i < pred.rows(); ++i) {
            const double p = pred(i, j);
            const double matched = target(i, j) == 1.0 ? p : 1.0 - p;
            total -= std::log(std::clamp(matched, eps, 1.0));
        }
    return total;
}

// d(clamped CE)/d(pre-activation), already divided by the batch size.
// Outside the clamp window the loss is flat (mismatched side) or its
// slope is below the clamp floor (matched side); both count as zero.
Matrix ce_delta(const Matrix& pred, const Matrix& target, double eps, double scale) {
    Matrix d(pred.rows(), pred.cols());
    for (Eigen::Index j = 0; j < pred.cols(); ++j)
        for (Eigen::Index i = 0; i < pred.rows(); ++i) {
            const double p = pred(i, j);
            d(i, j) = (p > eps && p < 1.0 - eps) ? scale * (p - target(i, j)) : 0.0;
        }
    return d;
}

// Activations of one branch's recognition pass, columns are examples;
// acts[0] is the input, acts[l] the sigmoid output of layer l.
std::vector<Matrix> encode_cols(const Branch& br, const Matrix& v_cols) {
    if (v_cols.rows() != br.layers.front().n_visible())
        throw DimensionError("input width does not match branch " + br.spec.name);
    std::vector<Matrix> acts;
    acts.push_back(v_cols);
    for (const Rbm& r : br.layers)
        acts.push_back(hidden_given_visible_cols(r, acts.back()));
    return acts;
}

// Decode activations from the shared layer down one branch: dec[0] is
// the branch's top-layer activation, dec.back() the visible output.
std::vector<Matrix> decode_cols(const Branch& br, const Matrix& shared) {
    std::vector<Matrix> dec;
    dec.push_back(sigmoid_mat((br.top_weights.transpose() * shared).colwise() +
                              br.layers.back().hidden_bias));
    for (std::size_t l = br.layers.size(); l-- > 0;) {
        const Rbm& r = br.layers[l];
        dec.push_back(sigmoid_mat((r.weights.transpose() * dec.back()).colwise() +
                                  r.visible_bias));
    }
    return dec;
}

struct GradAccum {
    std::vector<std::vector<Matrix>> d_weights;
    std::vector<std::vector<Vector>> d_visible_bias;
    std::vector<std::vector<Vector>> d_hidden_bias;
    std::vector<Matrix> d_top_weights;
    Vector d_top_bias;

    explicit GradAccum(const KFanNetwork& net) {
        d_weights.resize(net.branches.size());
        d_visible_bias.resize(net.branches.size());
        d_hidden_bias.resize(net.branches.size());
        d_top_weights.resize(net.branches.size());
        for (std::size_t b = 0; b < net.branches.size(); ++b) {
            const Branch& br = net.branches[b];
            for (const Rbm& r : br.layers) {
                d_weights[b].emplace_back(Matrix::Zero(r.weights.rows(), r.weights.cols()));
                d_visible_bias[b].emplace_back(Vector::Zero(r.visible_bias.size()));
                d_hidden_bias[b].emplace_back(Vector::Zero(r.hidden_bias.size()));
            }
            d_top_weights[b] =
                Matrix::Zero(br.top_weights.rows(), br.top_weights.cols());
        }
        d_top_bias = Vector::Zero(net.shared_dim());
    }
};

// Backpropagate a pre-activation delta at the visible end of a decode
// chain up to the shared layer; returns the delta arriving at shared.
Matrix backprop_decode(const Branch& br, std::size_t b,
                       const std::vector<Matrix>& dec, const Matrix& shared,
                       Matrix delta, GradAccum& g) {
    // dec[k] for k = depth..1 are outputs of the transposed layer maps;
    // walk them in reverse (visible first).
    for (std::size_t l = 0; l < br.layers.size(); ++l) {
        const Rbm& r = br.layers[l];
        const Matrix& input = dec[br.layers.size() - l - 1];
        g.d_weights[b][l] += input * delta.transpose();
        g.d_visible_bias[b][l] += delta.rowwise().sum();
        Matrix up = r.weights * delta;
        const Matrix& out = input;  // sigmoid output feeding this map
        delta = up.cwiseProduct(out.cwiseProduct(Matrix::Ones(out.rows(), out.cols()) - out));
    }
    // Map from shared into the branch top layer.
    g.d_top_weights[b] += shared * delta.transpose();
    g.d_hidden_bias[b][br.layers.size() - 1] += delta.rowwise().sum();
    return br.top_weights * delta;
}

// Backpropagate a pre-activation delta at the shared layer down an
// encode chain, accumulating the branch's recognition parameters.
void backprop_encode(const Branch& br, std::size_t b, const std::vector<Matrix>& acts,
                     const Matrix& shared_delta, GradAccum& g) {
    g.d_top_weights[b] += shared_delta * acts.back().transpose();
    Matrix delta_act = br.top_weights.transpose() * shared_delta;
    for (std::size_t l = br.layers.size(); l-- > 0;) {
        const Matrix& out = acts[l + 1];
        Matrix delta = delta_act.cwiseProduct(
            out.cwiseProduct(Matrix::Ones(out.rows(), out.cols()) - out));
        g.d_weights[b][l] += delta * acts[l].transpose();
        g.d_hidden_bias[b][l] += delta.rowwise().sum();
        if (l > 0) delta_act = br.layers[l].weights.transpose() * delta;
    }
}

FlatParams pack(const KFanNetwork& net, const GradAccum& g) {
    KFanNetwork shaped = net;
    for (std::size_t b = 0; b < shaped.branches.size(); ++b) {
        for (std::size_t l = 0; l < shaped.branches[b].layers.size(); ++l) {
            shaped.branches[b].layers[l].weights = g.d_weights[b][l];
            shaped.branches[b].layers[l].visible_bias = g.d_visible_bias[b][l];
            shaped.branches[b].layers[l].hidden_bias = g.d_hidden_bias[b][l];
        }
        shaped.branches[b].top_weights = g.d_top_weights[b];
    }
    shaped.top_bias = g.d_top_bias;
    return flatten(shaped);
}

}  // namespace

ParamLayout layout_of(const KFanNetwork& net) {
    ParamLayout layout;
    layout.shared_dim = net.shared_dim();
    Eigen::Index offset = 0;
    auto push = [&](const std::string& branch, Eigen::Index layer,
                    ParamLayout::Kind kind, Eigen::Index rows, Eigen::Index cols) {
        layout.segments.push_back({branch, layer, kind, rows, cols, offset});
        offset += rows * cols;
    };
    for (const Branch& br : net.branches) {
        layout.specs.push_back(br.spec);
        for (std::size_t l = 0; l < br.layers.size(); ++l) {
            const Rbm& r = br.layers[l];
            const auto li = static_cast<Eigen::Index>(l);
            push(br.spec.name, li, ParamLayout::Kind::weights, r.weights.rows(),
                 r.weights.cols());
            push(br.spec.name, li, ParamLayout::Kind::visible_bias,
                 r.visible_bias.size(), 1);
            push(br.spec.name, li, ParamLayout::Kind::hidden_bias,
                 r.hidden_bias.size(), 1);
        }
        push(br.spec.name, -1, ParamLayout::Kind::top_weights, br.top_weights.rows(),
             br.top_weights.cols());
    }
    push({}, -1, ParamLayout::Kind::top_bias, net.top_bias.size(), 1);
    layout.total = offset;
    return layout;
}

FlatParams flatten(const KFanNetwork& net) {
    FlatParams flat;
    flat.layout = layout_of(net);
    flat.values.resize(flat.layout.total);
    Eigen::Index at = 0;
    auto put_matrix = [&](const Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) flat.values(at++) = m(r, c);
    };
    auto put_vector = [&](const Vector& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) flat.values(at++) = v(i);
    };
    for (const Branch& br : net.branches) {
        for (const Rbm& r : br.layers) {
            put_matrix(r.weights);
            put_vector(r.visible_bias);
            put_vector(r.hidden_bias);
        }
        put_matrix(br.top_weights);
    }
    put_vector(net.top_bias);
    return flat;
}

KFanNetwork unflatten(const Vector& values, const ParamLayout& layout) {
    if (values.size() != layout.total)
        throw DomainError("flat parameter length does not match the layout");
    KFanNetwork net;
    Eigen::Index at = 0;
    auto take_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values(at++);
        return m;
    };
    auto take_vector = [&](Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = values(at++);
        return v;
    };
    for (const BranchSpec& spec : layout.specs) {
        Branch br;
        br.spec = spec;
        Eigen::Index below = spec.visible_dim;
        for (Eigen::Index h : spec.hidden_sizes) {
            Rbm r;
            r.weights = take_matrix(h, below);
            r.visible_bias = take_vector(below);
            r.hidden_bias = take_vector(h);
            br.layers.push_back(std::move(r));
            below = h;
        }
        br.top_weights = take_matrix(layout.shared_dim, below);
        net.branches.push_back(std::move(br));
    }
    net.top_bias = take_vector(layout.shared_dim);
    return net;
}

KFanNetwork unflatten(const FlatParams& flat) {
    return unflatten(flat.values, flat.layout);
}

Vector forward_shared_from_one(const KFanNetwork& net, const std::string& branch,
                               const Vector& v) {
    const Branch& br = net.branch(branch);
    const std::vector<Matrix> acts = encode_cols(br, v);
    return sigmoid_mat((br.top_weights * acts.back()).colwise() + net.top_bias).col(0);
}

std::pair<Matrix, Matrix> forward_restore(const KFanNetwork& net, const Matrix& v_x) {
    const Branch& bx = net.branch("x");
    const Branch& by = net.branch("y");
    const Branch& bz = net.branch("z");
    const std::vector<Matrix> acts = encode_cols(bx, v_x.transpose());
    const Matrix shared =
        sigmoid_mat((bx.top_weights * acts.back()).colwise() + net.top_bias);
    const Matrix pred_y = decode_cols(by, shared).back().transpose();
    const Matrix pred_z = decode_cols(bz, shared).back().transpose();
    return {pred_y, pred_z};
}

std::pair<Vector, Vector> forward_restore(const KFanNetwork& net, const Vector& v_x) {
    auto [y, z] = forward_restore(net, Matrix(v_x.transpose()));
    return {y.row(0).transpose(), z.row(0).transpose()};
}

Matrix forward_multiview(const KFanNetwork& net, const Matrix& v_x, const Matrix& v_y) {
    if (v_x.rows() != v_y.rows())
        throw DimensionError("multiview inputs must be aligned");
    const Branch& bx = net.branch("x");
    const Branch& by = net.branch("y");
    const Branch& bz = net.branch("z");
    const std::vector<Matrix> ax = encode_cols(bx, v_x.transpose());
    const std::vector<Matrix> ay = encode_cols(by, v_y.transpose());
    const Matrix shared = sigmoid_mat(
        (bx.top_weights * ax.back() + by.top_weights * ay.back()).colwise() +
        net.top_bias);
    return decode_cols(bz, shared).back().transpose();
}

Vector forward_multiview(const KFanNetwork& net, const Vector& v_x, const Vector& v_y) {
    return forward_multiview(net, Matrix(v_x.transpose()), Matrix(v_y.transpose()))
        .row(0)
        .transpose();
}

double loss_joint(const Matrix& pred_y, const Matrix& pred_z, const Matrix& target_y,
                  const Matrix& target_z, double lambda, double eps) {
    check_eps(eps);
    if (lambda < 0.0) throw DomainError("lambda must be non-negative");
    if (pred_y.rows() != pred_z.rows())
        throw DimensionError("prediction batches must be aligned");
    if (pred_y.rows() == 0) throw DimensionError("need at least one example");
    check_binary_targets(target_y, "restoration");
    check_binary_targets(target_z, "label");
    const double inv_b = 1.0 / static_cast<double>(pred_y.rows());
    return inv_b * (ce_sum(pred_y.transpose(), target_y.transpose(), eps) +
                    lambda * ce_sum(pred_z.transpose(), target_z.transpose(), eps));
}

double loss_multiview(const Matrix& pred_z, const Matrix& target_z, double eps) {
    check_eps(eps);
    if (pred_z.rows() == 0) throw DimensionError("need at least one example");
    check_binary_targets(target_z, "label");
    return ce_sum(pred_z.transpose(), target_z.transpose(), eps) /
           static_cast<double>(pred_z.rows());
}

double finetune_loss(const KFanNetwork& net, const FineTuneBatch& batch,
                     const FineTuneConfig& cfg) {
    if (cfg.task == Task::restore_label) {
        auto [pred_y, pred_z] = forward_restore(net, batch.x);
        return loss_joint(pred_y, pred_z, batch.y, batch.z, cfg.lambda,
                          cfg.epsilon_clamp);
    }
    Matrix pred_z = forward_multiview(net, batch.x, batch.y);
    return loss_multiview(pred_z, batch.z, cfg.epsilon_clamp);
}

FlatParams gradients(const KFanNetwork& net, const FineTuneBatch& batch,
                     const FineTuneConfig& cfg) {
    check_eps(cfg.epsilon_clamp);
    const double eps = cfg.epsilon_clamp;
    GradAccum g(net);

    if (cfg.task == Task::restore_label) {
        if (cfg.lambda < 0.0) throw DomainError("lambda must be non-negative");
        if (batch.x.rows() != batch.y.rows() || batch.x.rows() != batch.z.rows())
            throw DimensionError("batch inputs and targets must be aligned");
        if (batch.x.rows() == 0) throw DimensionError("need at least one example");
        check_binary_targets(batch.y, "restoration");
        check_binary_targets(batch.z, "label");
        const Branch& bx = net.branch("x");
        const Branch& by = net.branch("y");
        const Branch& bz = net.branch("z");
        const std::size_t ix = static_cast<std::size_t>(net.branch_index("x"));
        const std::size_t iy = static_cast<std::size_t>(net.branch_index("y"));
        const std::size_t iz = static_cast<std::size_t>(net.branch_index("z"));

        const std::vector<Matrix> acts = encode_cols(bx, batch.x.transpose());
        const Matrix shared =
            sigmoid_mat((bx.top_weights * acts.back()).colwise() + net.top_bias);
        const std::vector<Matrix> dec_y = decode_cols(by, shared);
        const std::vector<Matrix> dec_z = decode_cols(bz, shared);

        const double inv_b = 1.0 / static_cast<double>(batch.x.rows());
        Matrix delta_y =
            ce_delta(dec_y.back(), batch.y.transpose(), eps, inv_b);
        Matrix delta_z =
            ce_delta(dec_z.back(), batch.z.transpose(), eps, cfg.lambda * inv_b);

        Matrix shared_in = backprop_decode(by, iy, dec_y, shared, std::move(delta_y), g);
        shared_in += backprop_decode(bz, iz, dec_z, shared, std::move(delta_z), g);
        Matrix shared_delta = shared_in.cwiseProduct(shared.cwiseProduct(
            Matrix::Ones(shared.rows(), shared.cols()) - shared));
        g.d_top_bias += shared_delta.rowwise().sum();
        backprop_encode(bx, ix, acts, shared_delta, g);
    } else {
        if (batch.x.rows() != batch.y.rows() || batch.x.rows() != batch.z.rows())
            throw DimensionError("batch inputs and targets must be aligned");
        if (batch.x.rows() == 0) throw DimensionError("need at least one example");
        check_binary_targets(batch.z, "label");
        const Branch& bx = net.branch("x");
        const Branch& by = net.branch("y");
        const Branch& bz = net.branch("z");
        const std::size_t ix = static_cast<std::size_t>(net.branch_index("x"));
        const std::size_t iy = static_cast<std::size_t>(net.branch_index("y"));
        const std::size_t iz = static_cast<std::size_t>(net.branch_index("z"));

        const std::vector<Matrix> ax = encode_cols(bx, batch.x.transpose());
        const std::vector<Matrix> ay = encode_cols(by, batch.y.transpose());
        const Matrix shared = sigmoid_mat(
            (bx.top_weights * ax.back() + by.top_weights * ay.back()).colwise() +
            net.top_bias);
        const std::vector<Matrix> dec_z = decode_cols(bz, shared);

        const double inv_b = 1.0 / static_cast<double>(batch.x.rows());
        Matrix delta_z = ce_delta(dec_z.back(), batch.z.transpose(), eps, inv_b);
        Matrix shared_in = backprop_decode(bz, iz, dec_z, shared, std::move(delta_z), g);
        Matrix shared_delta = shared_in.cwiseProduct(shared.cwiseProduct(
            Matrix::Ones(shared.rows(), shared.cols()) - shared));
        g.d_top_bias += shared_delta.rowwise().sum();
        backprop_encode(bx, ix, ax, shared_delta, g);
        backprop_encode(by, iy, ay, shared_delta, g);
    }
    return pack(net, g);
}

Eigen::Index classify(const Vector& scores) {
    if (scores.size() == 0) throw DimensionError("cannot classify an empty vector");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i)
        if (scores(i) > scores(best)) best = i;
    return best;
}

std::vector<Eigen::Index> classify_rows(const Matrix& scores) {
    std::vector<Eigen::Index> out;
    out.reserve(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
        out.push_back(classify(scores.row(i).transpose()));
    return out;
}

}  // namespace kfan
