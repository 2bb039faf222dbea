#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <variant>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "kfan/data.hpp"
#include "kfan/error.hpp"
#include "kfan/rng.hpp"

using namespace kfan;
using testutil::fresh_dir;

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void push_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> idx_image_bytes() {
    std::vector<std::uint8_t> bytes;
    push_be32(bytes, 0x00000803);
    push_be32(bytes, 2);  // images
    push_be32(bytes, 2);  // height
    push_be32(bytes, 2);  // width
    for (std::uint8_t b : {0, 128, 255, 64, 7, 9, 11, 13}) bytes.push_back(b);
    return bytes;
}

// Sorted union of all parts; a valid split covers 0..n-1 exactly once.
std::vector<Eigen::Index> flatten_parts(
    const std::vector<std::vector<Eigen::Index>>& parts) {
    std::vector<Eigen::Index> all;
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("image container reads scaled big-endian payloads") {
    const auto dir = fresh_dir("idx");
    const auto path = dir / "img.idx";
    spit(path, idx_image_bytes());

    const ImageSet set = load_idx_images(path);
    CHECK(set.count() == 2);
    CHECK(set.height == 2);
    CHECK(set.width == 2);
    CHECK_FALSE(set.labeled());
    CHECK(set.images(0, 0) == 0.0);
    CHECK(set.images(0, 1) == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    CHECK(set.images(0, 2) == 1.0);  // byte 255 maps to exactly one
    CHECK(set.images(1, 3) == doctest::Approx(13.0 / 255.0).epsilon(1e-15));

    const auto var = load_idx(path);
    CHECK(std::holds_alternative<ImageSet>(var));
}

TEST_CASE("image container round trips byte for byte") {
    const auto dir = fresh_dir("idx_rt");
    const auto path = dir / "img.idx";
    spit(path, idx_image_bytes());
    const ImageSet set = load_idx_images(path);

    const auto out = dir / "copy.idx";
    write_idx_images(out, set);
    CHECK(slurp(out) == idx_image_bytes());
}

TEST_CASE("image container rejects malformed files") {
    const auto dir = fresh_dir("idx_bad");

    auto bytes = idx_image_bytes();
    bytes[3] = 0x01;  // labels magic in an image slot
    spit(dir / "magic.idx", bytes);
    CHECK_THROWS_AS(load_idx_images(dir / "magic.idx"), FormatError);
    try {
        load_idx_images(dir / "magic.idx");
    } catch (const FormatError& e) {
        CHECK(e.offset == 0);
    }

    bytes = idx_image_bytes();
    bytes.pop_back();
    spit(dir / "short.idx", bytes);
    try {
        load_idx_images(dir / "short.idx");
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset == 16);  // payload check runs at the header boundary
    }

    bytes = idx_image_bytes();
    bytes.push_back(0);
    spit(dir / "long.idx", bytes);
    try {
        load_idx_images(dir / "long.idx");
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset == 24);
    }

    bytes = idx_image_bytes();
    bytes[3] = 0x05;
    spit(dir / "unknown.idx", bytes);
    CHECK_THROWS_AS(load_idx(dir / "unknown.idx"), FormatError);

    spit(dir / "empty.idx", {});
    CHECK_THROWS_AS(load_idx_images(dir / "empty.idx"), FormatError);
}

TEST_CASE("label container round trips and validates") {
    const auto dir = fresh_dir("labels");
    std::vector<std::uint8_t> bytes;
    push_be32(bytes, 0x00000801);
    push_be32(bytes, 3);
    for (std::uint8_t b : {0, 5, 9}) bytes.push_back(b);
    spit(dir / "lab.idx", bytes);

    const std::vector<Eigen::Index> expected = {0, 5, 9};
    CHECK(load_idx_labels(dir / "lab.idx") == expected);
    CHECK(std::holds_alternative<std::vector<Eigen::Index>>(load_idx(dir / "lab.idx")));

    write_idx_labels(dir / "copy.idx", expected);
    CHECK(slurp(dir / "copy.idx") == bytes);

    bytes.push_back(2);
    spit(dir / "long.idx", bytes);
    CHECK_THROWS_AS(load_idx_labels(dir / "long.idx"), FormatError);

    CHECK_THROWS_AS(write_idx_labels(dir / "big.idx", {300}), DomainError);
    CHECK_THROWS_AS(load_idx_labels(dir / "missing.idx"), Error);
}

TEST_CASE("thresholding clamps pixels to exact zeros and ones") {
    ImageSet set;
    set.height = 1;
    set.width = 4;
    set.images = testutil::mat({{0.0, 0.49, 0.5, 1.0}});

    const ImageSet bin = binarize(set);
    CHECK(bin.images(0, 0) == 0.0);
    CHECK(bin.images(0, 1) == 0.0);
    CHECK(bin.images(0, 2) == 1.0);  // threshold itself rounds up
    CHECK(bin.images(0, 3) == 1.0);

    const ImageSet again = binarize(bin);
    CHECK(again.images == bin.images);  // idempotent on binary input

    CHECK(binarize(set, 0.6).images(0, 2) == 0.0);
    CHECK_THROWS_AS(binarize(set, 0.0), DomainError);
    CHECK_THROWS_AS(binarize(set, 1.0), DomainError);
}

TEST_CASE("stroke corruption only turns pixels on") {
    Rng rng(77);
    Vector gray(28 * 28);
    for (Eigen::Index i = 0; i < gray.size(); ++i) gray(i) = rng.next_uniform() * 0.5;

    NoiseConfig cfg;
    Rng noise_rng(5);
    const StrokeResult res = add_stroke_noise(gray, 28, 28, cfg, noise_rng);
    REQUIRE(res.image.size() == gray.size());
    for (Eigen::Index i = 0; i < gray.size(); ++i) {
        CHECK(res.image(i) >= gray(i));
        if (res.image(i) != gray(i)) CHECK(res.image(i) == 1.0);
    }

    Rng replay(5);
    const StrokeResult same = add_stroke_noise(gray, 28, 28, cfg, replay);
    CHECK(same.image == res.image);
    CHECK(same.coverage == res.coverage);

    cfg.num_strokes = 0;
    Rng quiet(5);
    const StrokeResult none = add_stroke_noise(gray, 28, 28, cfg, quiet);
    CHECK(none.image == gray);
    CHECK(none.coverage == 0.0);
}

TEST_CASE("stroke coverage lands inside the configured window") {
    const NoiseConfig cfg;  // 2 strokes, thickness 3-5, coverage 0.30-0.60
    const Vector blank = Vector::Zero(28 * 28);
    Rng rng(424242);
    int in_window = 0;
    for (int i = 0; i < 500; ++i) {
        const StrokeResult res = add_stroke_noise(blank, 28, 28, cfg, rng);
        if (res.in_range) {
            ++in_window;
            CHECK(res.coverage >= cfg.coverage_range.first);
            CHECK(res.coverage <= cfg.coverage_range.second);
            const double painted = res.image.sum() / static_cast<double>(blank.size());
            CHECK(painted == doctest::Approx(res.coverage).epsilon(1e-12));
        }
    }
    CHECK(in_window == 500);  // retries make misses astronomically rare
}

TEST_CASE("stroke configuration validation") {
    const Vector blank = Vector::Zero(16);
    Rng rng(1);
    NoiseConfig cfg;
    CHECK_THROWS_AS(add_stroke_noise(blank, 3, 3, cfg, rng), DimensionError);

    cfg = NoiseConfig();
    cfg.num_strokes = -1;
    CHECK_THROWS_AS(add_stroke_noise(blank, 4, 4, cfg, rng), DomainError);

    cfg = NoiseConfig();
    cfg.control_points = 1;
    CHECK_THROWS_AS(add_stroke_noise(blank, 4, 4, cfg, rng), DomainError);

    cfg = NoiseConfig();
    cfg.coverage_range = {0.6, 0.3};
    CHECK_THROWS_AS(add_stroke_noise(blank, 4, 4, cfg, rng), DomainError);

    cfg = NoiseConfig();
    cfg.max_retries = 0;
    CHECK_THROWS_AS(add_stroke_noise(blank, 4, 4, cfg, rng), DomainError);
}

TEST_CASE("triplets pair corrupted inputs with their clean sources") {
    Rng digit_rng(9);
    ImageSet clean = synth_digits(4, digit_rng);
    clean.labels = {0, 1, 0, 1};

    NoiseConfig cfg;
    Rng rng(10);
    const TripletDataset data = make_triplets(clean, cfg, 5, rng);
    CHECK(data.count() == 20);
    CHECK(data.num_classes() == 2);
    CHECK(data.x.cols() == 28 * 28);

    for (Eigen::Index i = 0; i < data.count(); ++i) {
        const Eigen::Index src = i / 5;
        CHECK(data.y.row(i) == clean.images.row(src));
        for (Eigen::Index p = 0; p < data.x.cols(); ++p)
            CHECK(data.x(i, p) >= data.y(i, p));
        CHECK(data.z.row(i).sum() == 1.0);
    }
    const std::vector<Eigen::Index> classes = data.class_indices();
    CHECK(std::count(classes.begin(), classes.end(), 0) == 10);
    CHECK(std::count(classes.begin(), classes.end(), 1) == 10);

    ImageSet unlabeled = clean;
    unlabeled.labels.clear();
    CHECK_THROWS_AS(make_triplets(unlabeled, cfg, 1, rng), DomainError);
    CHECK_THROWS_AS(make_triplets(clean, cfg, 0, rng), DomainError);

    ImageSet negative = clean;
    negative.labels[0] = -1;
    CHECK_THROWS_AS(make_triplets(negative, cfg, 1, rng), DomainError);
}

TEST_CASE("multiview container header parses without the payload") {
    const auto dir = fresh_dir("kmvd_hdr");
    std::vector<std::uint8_t> bytes = {'K', 'M', 'V', 'D'};
    push_le32(bytes, 4907);
    push_le32(bytes, 5632);
    push_le32(bytes, 6);
    push_le32(bytes, 3);
    spit(dir / "head.kmvd", bytes);

    const KmvdHeader h = read_kmvd_header(dir / "head.kmvd");
    CHECK(h.count == 4907);
    CHECK(h.d_x == 5632);
    CHECK(h.d_view == 6);
    CHECK(h.num_classes == 3);

    // The record payload is missing, so a full load must refuse.
    CHECK_THROWS_AS(load_multiview(dir / "head.kmvd"), FormatError);
}

TEST_CASE("multiview container round trips") {
    Rng rng(11);
    SynthMultiviewConfig cfg;
    cfg.count = 12;
    const TripletDataset data = synth_multiview(cfg, rng);

    const auto dir = fresh_dir("kmvd_rt");
    const auto path = dir / "data.kmvd";
    write_kmvd(path, data);
    const TripletDataset back = load_multiview(path);
    CHECK(back.x == data.x);
    CHECK(back.y == data.y);
    CHECK(back.z == data.z);

    write_kmvd(dir / "again.kmvd", back);
    CHECK(slurp(dir / "again.kmvd") == slurp(path));

    TripletDataset soft = data;
    soft.y(0, 0) = 0.5;
    CHECK_THROWS_AS(write_kmvd(dir / "soft.kmvd", soft), DomainError);
}

TEST_CASE("multiview container rejects corrupt records") {
    Rng rng(12);
    SynthMultiviewConfig cfg;
    cfg.count = 4;
    const TripletDataset data = synth_multiview(cfg, rng);
    const auto dir = fresh_dir("kmvd_bad");
    const auto path = dir / "data.kmvd";
    write_kmvd(path, data);
    const std::vector<std::uint8_t> good = slurp(path);

    // Record stride: 16 features * 8 bytes + 6 view bytes + 1 class byte.
    const std::size_t header = 20;
    const std::size_t stride = 16 * 8 + 6 + 1;

    auto expect_reject = [&](std::vector<std::uint8_t> bytes, std::size_t offset,
                             const char* tag) {
        const auto p = dir / (std::string(tag) + ".kmvd");
        spit(p, bytes);
        try {
            load_multiview(p);
            FAIL("expected a format error");
        } catch (const FormatError& e) {
            CHECK(e.offset == offset);
        }
    };

    std::vector<std::uint8_t> bytes = good;
    bytes[0] = 'X';
    expect_reject(bytes, 0, "magic");

    bytes = good;  // first feature becomes 1.5
    const std::vector<std::uint8_t> f15 = {0, 0, 0, 0, 0, 0, 0xF8, 0x3F};
    std::copy(f15.begin(), f15.end(), bytes.begin() + header);
    expect_reject(bytes, header, "feature");

    bytes = good;
    bytes[header + 16 * 8] = 2;
    expect_reject(bytes, header + 16 * 8, "view");

    bytes = good;
    bytes[header + stride - 1] = 9;
    expect_reject(bytes, header + stride - 1, "class");

    bytes = good;
    bytes.push_back(0);
    expect_reject(bytes, good.size(), "trailing");

    bytes = good;
    bytes.pop_back();
    expect_reject(bytes, good.size() - 1, "truncated");
}

TEST_CASE("planted fusion rule is exact while single views are not") {
    Rng rng(13);
    SynthMultiviewConfig cfg;  // count 400, masses 0.3/0.2/0.2/0.3
    const TripletDataset data = synth_multiview(cfg, rng);
    REQUIRE(data.count() == 400);
    CHECK(data.y.cols() == 6);
    CHECK(data.num_classes() == 2);

    const std::vector<Eigen::Index> truth = data.class_indices();
    std::vector<Eigen::Index> xor_rule;
    Eigen::Index cells[4] = {0, 0, 0, 0};
    for (Eigen::Index i = 0; i < data.count(); ++i) {
        const Eigen::Index cluster = data.x(i, 0) == 1.0 ? 0 : 1;
        const Eigen::Index view = data.y(i, 0) == 1.0 ? 0 : 1;
        ++cells[cluster * 2 + view];
        xor_rule.push_back(cluster ^ view);
    }
    CHECK(cells[0] == 120);
    CHECK(cells[1] == 80);
    CHECK(cells[2] == 80);
    CHECK(cells[3] == 120);

    Eigen::Index xor_errors = 0;
    Eigen::Index const_errors = 0;
    for (Eigen::Index i = 0; i < data.count(); ++i) {
        if (xor_rule[static_cast<std::size_t>(i)] != truth[static_cast<std::size_t>(i)])
            ++xor_errors;
        if (truth[static_cast<std::size_t>(i)] != 0) ++const_errors;
    }
    CHECK(xor_errors == 0);        // both inputs pin the class exactly
    CHECK(const_errors == 160);    // majority guess leaves 40% wrong

    Rng again(13);
    const TripletDataset rep = synth_multiview(cfg, again);
    CHECK(rep.x == data.x);
    CHECK(rep.y == data.y);
    CHECK(rep.z == data.z);

    SynthMultiviewConfig bad = cfg;
    bad.count = 3;
    CHECK_THROWS_AS(synth_multiview(bad, rng), DomainError);
    bad = cfg;
    bad.d_x = 1;
    CHECK_THROWS_AS(synth_multiview(bad, rng), DomainError);
    bad = cfg;
    bad.ambiguity = 0.5;
    CHECK_THROWS_AS(synth_multiview(bad, rng), DomainError);
}

TEST_CASE("digit glyphs are binary, labeled, and reproducible") {
    Rng rng(14);
    const ImageSet set = synth_digits(25, rng);
    CHECK(set.count() == 25);
    CHECK(set.height == 28);
    CHECK(set.width == 28);
    REQUIRE(set.labels.size() == 25);
    for (Eigen::Index i = 0; i < set.count(); ++i) {
        CHECK(set.labels[static_cast<std::size_t>(i)] == i % 10);
        double ink = 0.0;
        for (Eigen::Index p = 0; p < set.images.cols(); ++p) {
            const double v = set.images(i, p);
            CHECK((v == 0.0 || v == 1.0));
            ink += v;
        }
        CHECK(ink > 0.0);
    }

    Rng again(14);
    const ImageSet rep = synth_digits(25, again);
    CHECK(rep.images == set.images);

    CHECK_THROWS_AS(synth_digits(0, rng), DomainError);
}

TEST_CASE("fold split partitions every index exactly once") {
    const Eigen::Index n = 4907;
    const auto folds = split_folds(n, 10, 99);
    REQUIRE(folds.size() == 10);
    for (std::size_t f = 0; f < folds.size(); ++f)
        CHECK(folds[f].size() == (f < 7 ? 491u : 490u));

    const auto all = flatten_parts(folds);
    REQUIRE(all.size() == static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        CHECK(all[static_cast<std::size_t>(i)] == i);

    CHECK(split_folds(n, 10, 99) == folds);       // same seed, same split
    CHECK(split_folds(n, 10, 100) != folds);      // another seed reshuffles

    CHECK_THROWS_AS(split_folds(5, 6, 1), DomainError);
    CHECK_THROWS_AS(split_folds(5, 1, 1), DomainError);
}

TEST_CASE("fraction split floors every part except the last") {
    const auto parts = split_fractions(1014, {0.8, 0.2}, 7);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].size() == 811);
    CHECK(parts[1].size() == 203);

    const auto all = flatten_parts(parts);
    REQUIRE(all.size() == 1014);
    for (Eigen::Index i = 0; i < 1014; ++i)
        CHECK(all[static_cast<std::size_t>(i)] == i);

    CHECK_THROWS_AS(split_fractions(10, {0.5, 0.6}, 1), DomainError);
    CHECK_THROWS_AS(split_fractions(10, {1.0}, 1), DomainError);
    CHECK_THROWS_AS(split_fractions(10, {0.5, -0.5, 1.0}, 1), DomainError);
    CHECK_THROWS_AS(split_fractions(1, {0.5, 0.5}, 1), DomainError);
}

}  // TEST_SUITE
