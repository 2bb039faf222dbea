#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "kfan/config.hpp"
#include "kfan/data.hpp"
#include "kfan/error.hpp"
#include "kfan/finetune.hpp"
#include "kfan/pipeline.hpp"

using namespace kfan;
using testutil::fresh_dir;
using testutil::same_params;

namespace {

const char* kMinimal = "[data]\nsource = synth-digits\n";

// Small enough to train in milliseconds, large enough to exercise every
// pipeline stage.
const char* kTinyMultiview =
    "task = multiview\n"
    "seed = 11\n"
    "eta = 0.1\n"
    "epochs = 1\n"
    "batch = 8\n"
    "joint_epochs = 1\n"
    "max_iterations = 5\n"
    "shared = 5\n"
    "train_count = 24\n"
    "test_count = 8\n"
    "\n"
    "[branch.x]\n"
    "hidden = 6\n"
    "[branch.y]\n"
    "hidden = 4\n"
    "[branch.z]\n"
    "hidden = 3\n"
    "\n"
    "[data]\n"
    "source = synth-multiview\n"
    "count = 40\n";

const char* kTinyRestore =
    "task = restore-label\n"
    "seed = 5\n"
    "eta = 0.1\n"
    "epochs = 1\n"
    "batch = 16\n"
    "joint_epochs = 1\n"
    "max_iterations = 3\n"
    "shared = 6\n"
    "train_count = 24\n"
    "test_count = 8\n"
    "\n"
    "[branch.x]\n"
    "hidden = 12\n"
    "[branch.y]\n"
    "hidden = 12\n"
    "[branch.z]\n"
    "hidden = 4\n"
    "\n"
    "[data]\n"
    "source = synth-digits\n";

int thrown_line(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ParseError& e) {
        return e.line;
    }
    return -1;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults survive a minimal file") {
    const RunConfig cfg = parse_config(kMinimal);
    CHECK(cfg.task == Task::restore_label);
    CHECK(cfg.seed == 0);
    CHECK(cfg.pretrain.learning_rate == 0.1);
    CHECK(cfg.finetune.lambda == 1.0);
    CHECK(cfg.shared_dim == 48);
    CHECK(cfg.hidden_x == std::vector<Eigen::Index>{64, 32});
    CHECK(cfg.data.source == DataConfig::Source::synth_digits);
    CHECK(cfg.noise.num_strokes == 2);
}

TEST_CASE("named settings reach their fields") {
    const RunConfig cfg = parse_config(
        "eta = 0.1\n"
        "lambda = 1\n"
        "seed = 12345\n"
        "cd_steps = 2\n"
        "mf_sweeps = 7\n"
        "task = multiview\n"
        "[branch.y]\n"
        "hidden = 8, 4\n"
        "[noise]\n"
        "thickness = 2, 6\n"
        "[data]\n"
        "source = synth-multiview\n"
        "ambiguity = 0.1\n");
    CHECK(cfg.pretrain.learning_rate == 0.1);
    CHECK(cfg.joint.learning_rate == 0.1);  // joint stage inherits eta
    CHECK(cfg.finetune.lambda == 1.0);
    CHECK(cfg.seed == 12345);
    CHECK(cfg.noise.rng_seed == 12345);
    CHECK(cfg.pretrain.cd_steps == 2);
    CHECK(cfg.joint.mf_sweeps == 7);
    CHECK(cfg.task == Task::multiview);
    CHECK(cfg.finetune.task == Task::multiview);
    CHECK(cfg.hidden_y == std::vector<Eigen::Index>{8, 4});
    CHECK(cfg.noise.thickness_range.first == 2.0);
    CHECK(cfg.noise.thickness_range.second == 6.0);
    CHECK(cfg.data.ambiguity == 0.1);
}

TEST_CASE("comments and spacing are cosmetic") {
    const RunConfig cfg = parse_config(
        "# leading comment\n"
        "\n"
        "  eta   =   0.25   # trailing note\n"
        "[data]   \n"
        "source = synth-digits\n");
    CHECK(cfg.pretrain.learning_rate == 0.25);
}

TEST_CASE("duplicate keys name both lines") {
    const std::string text =
        "eta = 0.1\n"
        "eta = 0.2\n" +
        std::string(kMinimal);
    try {
        parse_config(text);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
        const std::string what = e.what();
        CHECK(what.find("lines 1 and 2") != std::string::npos);
        CHECK(what.find("eta") != std::string::npos);
    }
}

TEST_CASE("parser is fail-closed with line numbers") {
    CHECK(thrown_line("typo = 1\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("[data]\nsource = synth-digits\nbogus = 2\n") == 3);
    CHECK(thrown_line("[mystery]\n") == 1);
    CHECK(thrown_line("eta = fast\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("epochs = 2.5\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("seed = -3\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("eta 0.1\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("eta =\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("[data\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("[data]\nsource = cloud\n") == 2);
    CHECK(thrown_line("task = both\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("[branch.x]\nhidden = 8, 0\n[data]\nsource = synth-digits\n") ==
          2);
    CHECK(thrown_line("[branch.x]\nhidden = 8.5\n[data]\nsource = synth-digits\n") ==
          2);
    CHECK(thrown_line("[noise]\ncoverage = 0.4\n[data]\nsource = synth-digits\n") ==
          2);
    CHECK(thrown_line("eta = -1\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("shared = 0\n[data]\nsource = synth-digits\n") == 1);
    CHECK(thrown_line("train_count = 0\n[data]\nsource = synth-digits\n") == 1);
    CHECK_THROWS_AS(parse_config("eta = 0.1\n"), ParseError);  // no [data] section
}

TEST_CASE("serialization echoes back to the same text") {
    const RunConfig defaults = parse_config(kMinimal);
    const std::string echoed = serialize_config(defaults);
    CHECK(serialize_config(parse_config(echoed)) == echoed);

    RunConfig custom = parse_config(kTinyMultiview);
    custom.data.file = "records.kmvd";
    custom.data.source = DataConfig::Source::kmvd;
    const std::string text = serialize_config(custom);
    const RunConfig back = parse_config(text);
    CHECK(serialize_config(back) == text);
    CHECK(back.task == Task::multiview);
    CHECK(back.seed == 11);
    CHECK(back.hidden_x == std::vector<Eigen::Index>{6});
    CHECK(back.data.file == "records.kmvd");
}

TEST_CASE("dataset assembly is deterministic and shaped by the config") {
    const RunConfig cfg = parse_config(kTinyMultiview);
    const Datasets a = assemble_datasets(cfg);
    const Datasets b = assemble_datasets(cfg);
    CHECK(a.train.x == b.train.x);
    CHECK(a.train.y == b.train.y);
    CHECK(a.train.z == b.train.z);
    CHECK(a.test.x == b.test.x);

    CHECK(a.train.count() == 24);
    CHECK(a.test.count() == 8);
    CHECK(a.train.x.cols() == 16);
    CHECK(a.train.y.cols() == 6);
    CHECK(a.train.z.cols() == 2);
    CHECK(a.height == 0);  // multiview features are not an image grid

    const RunConfig digits = parse_config(kTinyRestore);
    const Datasets d = assemble_datasets(digits);
    CHECK(d.train.x.cols() == 28 * 28);
    CHECK(d.height == 28);
    CHECK(d.width == 28);
    CHECK(d.train.z.cols() == 10);
    // Corruption only adds ink on top of the clean companion image.
    for (Eigen::Index p = 0; p < d.train.x.cols(); ++p)
        CHECK(d.train.x(0, p) >= d.train.y(0, p));
}

TEST_CASE("a dataset smaller than the requested split is refused") {
    Rng rng(3);
    SynthMultiviewConfig synth;
    synth.count = 12;
    const auto dir = fresh_dir("pipeline");
    write_kmvd(dir / "small.kmvd", synth_multiview(synth, rng));

    RunConfig cfg = parse_config(kTinyMultiview);
    cfg.data.source = DataConfig::Source::kmvd;
    cfg.data.file = "small.kmvd";
    cfg.train_count = 10;
    cfg.test_count = 10;
    CHECK_THROWS_AS(assemble_datasets(cfg, dir), DomainError);

    cfg.test_count = 2;
    const Datasets ok = assemble_datasets(cfg, dir);
    CHECK(ok.train.count() == 10);
    CHECK(ok.test.count() == 2);
}

TEST_CASE("the full training chain is reproducible bit for bit") {
    const RunConfig cfg = parse_config(kTinyMultiview);
    const Datasets data = assemble_datasets(cfg);

    const KFanNetwork pre_a = run_pretrain(cfg, data);
    const KFanNetwork pre_b = run_pretrain(cfg, data);
    CHECK(same_params(pre_a, pre_b));

    const KFanNetwork tuned_a = run_finetune(cfg, data, pre_a);
    const KFanNetwork tuned_b = run_finetune(cfg, data, pre_b);
    CHECK(same_params(tuned_a, tuned_b));

    // The optimizer never raises the full-batch objective.
    const FineTuneBatch batch{data.train.x, data.train.y, data.train.z};
    CHECK(finetune_loss(tuned_a, batch, cfg.finetune) <=
          finetune_loss(pre_a, batch, cfg.finetune) + 1e-12);
}

TEST_CASE("evaluation reports carry the task's metrics") {
    const RunConfig mv = parse_config(kTinyMultiview);
    const Datasets mv_data = assemble_datasets(mv);
    const KFanNetwork mv_net = run_pretrain(mv, mv_data);
    const EvalReport mv_report = evaluate(mv, mv_data, mv_net);
    CHECK(mv_report.n_examples == 8);
    CHECK(mv_report.error_rate.has_value());
    CHECK_FALSE(mv_report.psnr_db.has_value());
    CHECK(classify_all(mv, mv_data, mv_net).size() == 8);
    CHECK_THROWS_AS(denoise_all(mv, mv_data, mv_net), DomainError);

    const RunConfig rl = parse_config(kTinyRestore);
    const Datasets rl_data = assemble_datasets(rl);
    const KFanNetwork rl_net = run_pretrain(rl, rl_data);
    const EvalReport rl_report = evaluate(rl, rl_data, rl_net);
    CHECK(rl_report.psnr_db.has_value());
    CHECK(rl_report.psnr_noisy_db.has_value());
    CHECK(rl_report.error_rate.has_value());
    const Matrix restored = denoise_all(rl, rl_data, rl_net);
    CHECK(restored.rows() == 8);
    CHECK(restored.cols() == 28 * 28);
    CHECK((restored.array() > 0.0).all());
    CHECK((restored.array() < 1.0).all());
}

}  // TEST_SUITE
