#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "kfan/config.hpp"
#include "kfan/error.hpp"
#include "kfan/finetune.hpp"
#include "kfan/metrics.hpp"
#include "kfan/optim.hpp"
#include "kfan/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace kfan;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string data_dir;
    std::string out_dir;
    std::string task;
    std::string checkpoint;
};

RunConfig load_config(const CommonFlags& flags) {
    std::ifstream in(flags.config_path);
    if (!in) throw Error("cannot open config " + flags.config_path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    RunConfig cfg = parse_config(text);
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.noise.rng_seed = *flags.seed;
    }
    if (!flags.task.empty()) {
        if (flags.task == "restore-label")
            cfg.task = Task::restore_label;
        else if (flags.task == "multiview")
            cfg.task = Task::multiview;
        else
            throw DomainError("task must be restore-label or multiview");
        cfg.finetune.task = cfg.task;
    }
    return cfg;
}

// A run directory always receives the effective config and seed so the
// run can be reproduced from its outputs alone.
void write_provenance(const fs::path& out, const RunConfig& cfg) {
    fs::create_directories(out);
    std::ofstream config(out / "config.cfg", std::ios::trunc);
    config << serialize_config(cfg);
    std::ofstream seed(out / "seed.txt", std::ios::trunc);
    seed << cfg.seed << "\n";
    if (!config || !seed) throw Error("cannot write run directory " + out.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
}

int cmd_pretrain(const CommonFlags& flags) {
    const RunConfig cfg = load_config(flags);
    const Datasets data = assemble_datasets(cfg, flags.data_dir);
    const KFanNetwork net = run_pretrain(cfg, data);
    write_provenance(flags.out_dir, cfg);
    save_checkpoint(net, fs::path(flags.out_dir) / "pretrained.kfan");
    std::cout << "pretrained checkpoint written to "
              << (fs::path(flags.out_dir) / "pretrained.kfan").string() << "\n";
    return kExitOk;
}

int cmd_finetune(const CommonFlags& flags) {
    const RunConfig cfg = load_config(flags);
    const Datasets data = assemble_datasets(cfg, flags.data_dir);
    const KFanNetwork net = load_checkpoint(flags.checkpoint);
    const KFanNetwork tuned = run_finetune(cfg, data, net);
    write_provenance(flags.out_dir, cfg);
    save_checkpoint(tuned, fs::path(flags.out_dir) / "finetuned.kfan");
    std::cout << "finetuned checkpoint written to "
              << (fs::path(flags.out_dir) / "finetuned.kfan").string() << "\n";
    return kExitOk;
}

int cmd_eval(const CommonFlags& flags) {
    const RunConfig cfg = load_config(flags);
    const Datasets data = assemble_datasets(cfg, flags.data_dir);
    const KFanNetwork net = load_checkpoint(flags.checkpoint);
    const EvalReport report = evaluate(cfg, data, net);
    const std::string text = report_text(report);
    write_provenance(flags.out_dir, cfg);
    write_text(fs::path(flags.out_dir) / "report.txt", text);
    std::cout << text;
    return kExitOk;
}

int cmd_denoise(const CommonFlags& flags) {
    const RunConfig cfg = load_config(flags);
    const Datasets data = assemble_datasets(cfg, flags.data_dir);
    const KFanNetwork net = load_checkpoint(flags.checkpoint);
    const Matrix restored = denoise_all(cfg, data, net);
    write_provenance(flags.out_dir, cfg);
    ImageSet out_images;
    out_images.images = restored;
    out_images.height = data.height;
    out_images.width = data.width;
    write_idx_images(fs::path(flags.out_dir) / "denoised.idx", out_images);
    const EvalReport report = evaluate(cfg, data, net);
    write_text(fs::path(flags.out_dir) / "report.txt", report_text(report));
    std::cout << "denoised " << restored.rows() << " images to "
              << (fs::path(flags.out_dir) / "denoised.idx").string() << "\n";
    return kExitOk;
}

int cmd_classify(const CommonFlags& flags) {
    const RunConfig cfg = load_config(flags);
    const Datasets data = assemble_datasets(cfg, flags.data_dir);
    const KFanNetwork net = load_checkpoint(flags.checkpoint);
    const std::vector<Eigen::Index> predicted = classify_all(cfg, data, net);
    write_provenance(flags.out_dir, cfg);
    std::string lines;
    for (Eigen::Index c : predicted) lines += std::to_string(c) + "\n";
    write_text(fs::path(flags.out_dir) / "predictions.txt", lines);
    const EvalReport report = evaluate(cfg, data, net);
    write_text(fs::path(flags.out_dir) / "report.txt", report_text(report));
    std::cout << "wrote " << predicted.size() << " predictions to "
              << (fs::path(flags.out_dir) / "predictions.txt").string() << "\n";
    return kExitOk;
}

int cmd_make_noise(const CommonFlags& flags) {
    const RunConfig cfg = load_config(flags);
    if (cfg.data.source == DataConfig::Source::synth_multiview ||
        cfg.data.source == DataConfig::Source::kmvd)
        throw DomainError("make-noise applies to image datasets");
    const Datasets data = assemble_datasets(cfg, flags.data_dir);
    write_provenance(flags.out_dir, cfg);

    const auto stack = [](const Matrix& a, const Matrix& b) {
        Matrix out(a.rows() + b.rows(), a.cols());
        out << a, b;
        return out;
    };
    ImageSet noisy;
    noisy.images = stack(data.train.x, data.test.x);
    noisy.height = data.height;
    noisy.width = data.width;
    ImageSet clean = noisy;
    clean.images = stack(data.train.y, data.test.y);

    std::vector<Eigen::Index> labels;
    for (const TripletDataset* part : {&data.train, &data.test})
        for (Eigen::Index c : part->class_indices()) labels.push_back(c);

    write_idx_images(fs::path(flags.out_dir) / "noisy-images.idx", noisy);
    write_idx_images(fs::path(flags.out_dir) / "clean-images.idx", clean);
    write_idx_labels(fs::path(flags.out_dir) / "labels.idx", labels);
    std::cout << "wrote " << noisy.count() << " noisy/clean image pairs to "
              << flags.out_dir << "\n";
    return kExitOk;
}

// Finite-difference audit of the backprop gradients on small random
// networks, both tasks; nonzero exit when any component disagrees.
int cmd_gradcheck(const CommonFlags& flags) {
    const RunConfig cfg = load_config(flags);
    const double tolerance = 1e-4;
    const double step = 1e-5;
    bool all_ok = true;
    for (int seed = 0; seed < 3; ++seed) {
        for (Task task : {Task::restore_label, Task::multiview}) {
            Rng rng(cfg.seed + static_cast<std::uint64_t>(seed));
            TrainConfig init;
            init.weight_init_stddev = 0.5;
            KFanNetwork net = build_kfan(
                {{"x", 5, {4, 3}}, {"y", 4, {3}}, {"z", 3, {2}}}, 3, init, rng);
            FineTuneBatch batch;
            batch.x = sample_bernoulli(Matrix::Constant(2, 5, 0.5), rng);
            batch.y = sample_bernoulli(Matrix::Constant(2, 4, 0.5), rng);
            batch.z = Matrix::Zero(2, 3);
            batch.z(0, 0) = 1.0;
            batch.z(1, 2) = 1.0;

            FineTuneConfig ft = cfg.finetune;
            ft.task = task;
            const FlatParams analytic = gradients(net, batch, ft);
            const ParamLayout layout = analytic.layout;
            const Vector numeric = finite_diff_grad(
                [&](const Vector& x) {
                    return finetune_loss(unflatten(x, layout), batch, ft);
                },
                flatten(net).values, step);
            double worst = 0.0;
            for (Eigen::Index i = 0; i < numeric.size(); ++i) {
                const double denom = std::max(1.0, std::abs(numeric(i)));
                worst = std::max(worst,
                                 std::abs(analytic.values(i) - numeric(i)) / denom);
            }
            const bool ok = worst < tolerance;
            all_ok = all_ok && ok;
            std::cout << (task == Task::restore_label ? "restore-label" : "multiview")
                      << " seed " << seed << ": max relative error " << worst << " "
                      << (ok ? "ok" : "FAIL") << "\n";
        }
    }
    if (!all_ok) {
        std::cerr << "error: gradient check failed\n";
        return kExitNumeric;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"K-fan multimodal network trainer"};
    app.require_subcommand(1);

    CommonFlags flags;
    auto add_common = [&](CLI::App* cmd, bool needs_out, bool needs_checkpoint) {
        cmd->add_option("--config", flags.config_path, "run configuration file")
            ->required();
        cmd->add_option("--seed", flags.seed, "seed override");
        cmd->add_option("--data-dir", flags.data_dir, "directory for dataset paths");
        auto* out = cmd->add_option("--out", flags.out_dir, "run output directory");
        if (needs_out) out->required();
        cmd->add_option("--task", flags.task, "restore-label or multiview");
        auto* ck = cmd->add_option("--checkpoint", flags.checkpoint,
                                   "checkpoint to load");
        if (needs_checkpoint) ck->required();
    };

    add_common(app.add_subcommand("pretrain", "layerwise + joint CD pretraining"),
               true, false);
    add_common(app.add_subcommand("finetune", "task-loss optimization"), true, true);
    add_common(app.add_subcommand("eval", "test-set report"), true, true);
    add_common(app.add_subcommand("denoise", "write restored test images"), true,
               true);
    add_common(app.add_subcommand("classify", "write test predictions"), true, true);
    add_common(app.add_subcommand("make-noise", "write corrupted dataset files"),
               true, false);
    add_common(app.add_subcommand("gradcheck", "finite-difference gradient audit"),
               false, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand("pretrain")) return cmd_pretrain(flags);
        if (app.got_subcommand("finetune")) return cmd_finetune(flags);
        if (app.got_subcommand("eval")) return cmd_eval(flags);
        if (app.got_subcommand("denoise")) return cmd_denoise(flags);
        if (app.got_subcommand("classify")) return cmd_classify(flags);
        if (app.got_subcommand("make-noise")) return cmd_make_noise(flags);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(flags);
        std::cerr << "error: no subcommand\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const BudgetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
