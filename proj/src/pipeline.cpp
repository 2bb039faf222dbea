#include "kfan/pipeline.hpp"

#include <algorithm>

#include "kfan/error.hpp"
#include "kfan/finetune.hpp"
#include "kfan/optim.hpp"
#include "kfan/rbm.hpp"

namespace kfan {

namespace {

// Independent deterministic streams per pipeline stage, all derived from
// the run seed.
enum class Stage : std::uint64_t { data = 1, partition = 2, greedy = 3, joint = 4 };

Rng stage_rng(std::uint64_t seed, Stage stage) {
    Rng base(seed);
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(stage); ++i)
        base.next_u64();
    return base.split();
}

Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& rows,
                 std::size_t from, std::size_t count) {
    Matrix out(static_cast<Eigen::Index>(count), m.cols());
    for (std::size_t i = 0; i < count; ++i)
        out.row(static_cast<Eigen::Index>(i)) = m.row(rows[from + i]);
    return out;
}

void partition(const TripletDataset& all, const RunConfig& cfg, Datasets& out) {
    const auto need = cfg.train_count + cfg.test_count;
    if (all.count() < need)
        throw DomainError("dataset holds " + std::to_string(all.count()) +
                          " records but the run needs " + std::to_string(need));
    // Seeded shuffle of record indices, then contiguous cut.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(all.count()));
    for (Eigen::Index i = 0; i < all.count(); ++i)
        order[static_cast<std::size_t>(i)] = i;
    Rng rng = stage_rng(cfg.seed, Stage::partition);
    for (Eigen::Index i = all.count() - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(
            rng.next_uniform() * static_cast<double>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(j)]);
    }
    const auto train_n = static_cast<std::size_t>(cfg.train_count);
    const auto test_n = static_cast<std::size_t>(cfg.test_count);
    out.train.x = take_rows(all.x, order, 0, train_n);
    out.train.y = take_rows(all.y, order, 0, train_n);
    out.train.z = take_rows(all.z, order, 0, train_n);
    out.test.x = take_rows(all.x, order, train_n, test_n);
    out.test.y = take_rows(all.y, order, train_n, test_n);
    out.test.z = take_rows(all.z, order, train_n, test_n);
}

}  // namespace

Datasets assemble_datasets(const RunConfig& cfg, const std::filesystem::path& data_dir) {
    auto resolve = [&](const std::filesystem::path& p) {
        return (p.is_absolute() || data_dir.empty()) ? p : data_dir / p;
    };
    Rng rng = stage_rng(cfg.seed, Stage::data);
    Datasets out;
    TripletDataset all;

    switch (cfg.data.source) {
        case DataConfig::Source::synth_digits: {
            const auto need = cfg.train_count + cfg.test_count;
            const Eigen::Index clean_count =
                (need + cfg.copies_per_image - 1) / cfg.copies_per_image;
            ImageSet clean = synth_digits(clean_count, rng);
            all = make_triplets(clean, cfg.noise, cfg.copies_per_image, rng);
            out.height = clean.height;
            out.width = clean.width;
            break;
        }
        case DataConfig::Source::synth_multiview: {
            SynthMultiviewConfig synth;
            synth.count = std::max(cfg.data.count, cfg.train_count + cfg.test_count);
            synth.ambiguity = cfg.data.ambiguity;
            all = synth_multiview(synth, rng);
            break;
        }
        case DataConfig::Source::idx: {
            if (cfg.data.images.empty() || cfg.data.labels.empty())
                throw DomainError("idx source needs data images and labels paths");
            ImageSet clean = load_idx_images(resolve(cfg.data.images));
            clean.labels = load_idx_labels(resolve(cfg.data.labels));
            if (static_cast<Eigen::Index>(clean.labels.size()) != clean.count())
                throw DomainError("image and label counts differ");
            clean = binarize(clean, cfg.binarize_threshold);
            all = make_triplets(clean, cfg.noise, cfg.copies_per_image, rng);
            out.height = clean.height;
            out.width = clean.width;
            break;
        }
        case DataConfig::Source::kmvd: {
            if (cfg.data.file.empty())
                throw DomainError("kmvd source needs a data file path");
            all = load_multiview(resolve(cfg.data.file));
            break;
        }
    }
    partition(all, cfg, out);
    return out;
}

KFanNetwork run_pretrain(const RunConfig& cfg, const Datasets& data) {
    const std::vector<std::pair<std::string, const Matrix*>> channels = {
        {"x", &data.train.x}, {"y", &data.train.y}, {"z", &data.train.z}};
    const std::vector<const std::vector<Eigen::Index>*> hidden = {
        &cfg.hidden_x, &cfg.hidden_y, &cfg.hidden_z};

    Rng greedy_rng = stage_rng(cfg.seed, Stage::greedy);
    std::vector<Branch> branches;
    Matrix top_features(data.train.count(), 0);
    for (std::size_t b = 0; b < channels.size(); ++b) {
        std::vector<Rbm> stack =
            pretrain_stack(*hidden[b], *channels[b].second, cfg.pretrain, greedy_rng);

        Branch br;
        br.spec.name = channels[b].first;
        br.spec.visible_dim = channels[b].second->cols();
        br.spec.hidden_sizes = *hidden[b];
        br.layers = std::move(stack);

        // Features feeding the shared layer: propagate probabilities up.
        Matrix probs = channels[b].second->transpose();
        for (const Rbm& r : br.layers) probs = hidden_given_visible_cols(r, probs);
        Matrix widened(data.train.count(), top_features.cols() + probs.rows());
        widened << top_features, probs.transpose();
        top_features = std::move(widened);
        branches.push_back(std::move(br));
    }

    // One shared-layer model over the concatenated branch features; its
    // weight blocks become the per-branch shared projections, and its
    // visible bias folds into each branch's top hidden bias (the joint
    // energy keeps a single bias slot per top layer).
    Rbm top = train_rbm(
        init_rbm(top_features.cols(), cfg.shared_dim, cfg.pretrain.weight_init_stddev,
                 greedy_rng),
        top_features, cfg.pretrain, greedy_rng);
    KFanNetwork net;
    Eigen::Index col = 0;
    for (Branch& br : branches) {
        const Eigen::Index width = br.layers.back().n_hidden();
        br.top_weights = top.weights.middleCols(col, width);
        br.layers.back().hidden_bias += top.visible_bias.segment(col, width);
        col += width;
        net.branches.push_back(std::move(br));
    }
    net.top_bias = top.hidden_bias;

    // Joint CD over seeded minibatches.
    Rng joint_rng = stage_rng(cfg.seed, Stage::joint);
    const Eigen::Index n = data.train.count();
    const Eigen::Index batch = std::min<Eigen::Index>(cfg.joint.batch_size, n);
    for (int epoch = 0; epoch < cfg.joint_epochs; ++epoch) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        for (Eigen::Index i = n - 1; i > 0; --i) {
            const auto j = static_cast<Eigen::Index>(
                joint_rng.next_uniform() * static_cast<double>(i + 1));
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(j)]);
        }
        for (Eigen::Index start = 0; start + batch <= n; start += batch) {
            const std::vector<Matrix> batches = {
                take_rows(data.train.x, order, static_cast<std::size_t>(start),
                          static_cast<std::size_t>(batch)),
                take_rows(data.train.y, order, static_cast<std::size_t>(start),
                          static_cast<std::size_t>(batch)),
                take_rows(data.train.z, order, static_cast<std::size_t>(start),
                          static_cast<std::size_t>(batch))};
            net = joint_cd_update(net, batches, cfg.joint, joint_rng);
        }
    }
    return net;
}

KFanNetwork run_finetune(const RunConfig& cfg, const Datasets& data,
                         const KFanNetwork& net) {
    const FlatParams start = flatten(net);
    FineTuneBatch batch{data.train.x, data.train.y, data.train.z};
    const ParamLayout& layout = start.layout;
    const Objective objective = [&](const Vector& x, Vector& grad) {
        const KFanNetwork candidate = unflatten(x, layout);
        grad = gradients(candidate, batch, cfg.finetune).values;
        return finetune_loss(candidate, batch, cfg.finetune);
    };
    LbfgsConfig lbfgs = cfg.lbfgs;
    lbfgs.max_iterations = cfg.finetune.max_iterations;
    const LbfgsResult result = lbfgs_minimize(objective, start.values, lbfgs);
    return unflatten(result.x, layout);
}

EvalReport evaluate(const RunConfig& cfg, const Datasets& data, const KFanNetwork& net) {
    EvalReport report;
    report.n_examples = data.test.count();
    if (cfg.task == Task::restore_label) {
        const auto [pred_y, pred_z] = forward_restore(net, data.test.x);
        double restored = 0.0;
        double noisy = 0.0;
        for (Eigen::Index i = 0; i < data.test.count(); ++i) {
            restored += psnr(data.test.y.row(i).transpose(),
                             pred_y.row(i).transpose());
            noisy += psnr(data.test.y.row(i).transpose(),
                          data.test.x.row(i).transpose());
        }
        report.psnr_db = restored / static_cast<double>(data.test.count());
        report.psnr_noisy_db = noisy / static_cast<double>(data.test.count());
        report.error_rate =
            error_rate(classify_rows(pred_z), data.test.class_indices());
    } else {
        const Matrix pred_z = forward_multiview(net, data.test.x, data.test.y);
        report.error_rate =
            error_rate(classify_rows(pred_z), data.test.class_indices());
    }
    return report;
}

Matrix denoise_all(const RunConfig& cfg, const Datasets& data, const KFanNetwork& net) {
    if (cfg.task != Task::restore_label)
        throw DomainError("denoise applies to the restore-label task");
    return forward_restore(net, data.test.x).first;
}

std::vector<Eigen::Index> classify_all(const RunConfig& cfg, const Datasets& data,
                                       const KFanNetwork& net) {
    const Matrix pred = cfg.task == Task::restore_label
                            ? forward_restore(net, data.test.x).second
                            : forward_multiview(net, data.test.x, data.test.y);
    return classify_rows(pred);
}

}  // namespace kfan
