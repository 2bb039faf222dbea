#pragma once

#include <filesystem>
#include <utility>
#include <variant>
#include <vector>

#include "kfan/rng.hpp"
#include "kfan/types.hpp"

namespace kfan {

/// N images as rows, pixels in [0,1], row-major H*W per row. Labels are
/// optional; empty means unlabeled.
struct ImageSet {
    Matrix images;
    Eigen::Index height = 0;
    Eigen::Index width = 0;
    std::vector<Eigen::Index> labels;

    Eigen::Index count() const { return images.rows(); }
    bool labeled() const { return !labels.empty(); }
};

/// Aligned (input, companion, one-hot class) records, one per row.
struct TripletDataset {
    Matrix x;
    Matrix y;
    Matrix z;

    Eigen::Index count() const { return x.rows(); }
    Eigen::Index num_classes() const { return z.cols(); }
    std::vector<Eigen::Index> class_indices() const;
};

struct NoiseConfig {
    int num_strokes = 2;
    std::pair<double, double> thickness_range = {3.0, 5.0};  // px at 28x28 scale
    int control_points = 3;
    std::pair<double, double> coverage_range = {0.3, 0.6};
    int max_retries = 25;
    std::uint64_t rng_seed = 0;
};

struct StrokeResult {
    Vector image;
    double coverage = 0.0;  // fraction of pixels under the stroke footprint
    bool in_range = false;
};

// ---- IDX container (big-endian; magics 0x00000803 images, 0x00000801
// labels). Bytes scale to [0,1] by 1/255.

ImageSet load_idx_images(const std::filesystem::path& path);
std::vector<Eigen::Index> load_idx_labels(const std::filesystem::path& path);
std::variant<ImageSet, std::vector<Eigen::Index>> load_idx(
    const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const ImageSet& images);
void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<Eigen::Index>& labels);

/// Pixel >= threshold becomes 1, else 0. Threshold must lie in (0,1).
ImageSet binarize(const ImageSet& images, double threshold = 0.5);

/// Rasterizes cfg.num_strokes random polylines over a binary image,
/// setting covered pixels on. The attempt is retried (fresh strokes, same
/// stream) until the covered fraction falls inside cfg.coverage_range or
/// cfg.max_retries attempts have run; the last attempt is returned with
/// in_range=false when the window was never hit.
StrokeResult add_stroke_noise(const Vector& image, Eigen::Index height,
                              Eigen::Index width, const NoiseConfig& cfg, Rng& rng);

/// copies_per_image corrupted variants of every labeled clean image:
/// x = noisy, y = clean, z = one-hot label.
TripletDataset make_triplets(const ImageSet& clean, const NoiseConfig& cfg,
                             int copies_per_image, Rng& rng);

// ---- KMVD container (little-endian: magic "KMVD", then u32 counts
// N, d_x, d_view, num_classes; per record d_x f64 features in [0,1],
// d_view indicator bytes, one class byte).

struct KmvdHeader {
    Eigen::Index count = 0;
    Eigen::Index d_x = 0;
    Eigen::Index d_view = 0;
    Eigen::Index num_classes = 0;
};

KmvdHeader read_kmvd_header(const std::filesystem::path& path);
TripletDataset load_multiview(const std::filesystem::path& path);
void write_kmvd(const std::filesystem::path& path, const TripletDataset& data);

/// Planted-rule fusion dataset: the x features identify one of two
/// clusters, the 6-bit companion view one of two patterns, and the class
/// is their XOR. Cell weights (0.3, 0.2, 0.2, 0.3) make the classes
/// 60/40, so either input alone leaves 40% irreducible error while both
/// together determine the class exactly. `ambiguity` flips each generated
/// bit independently with that probability.
struct SynthMultiviewConfig {
    Eigen::Index count = 400;
    Eigen::Index d_x = 16;
    double ambiguity = 0.0;
};

TripletDataset synth_multiview(const SynthMultiviewConfig& cfg, Rng& rng);

/// Seven-segment digit glyphs on a 28x28 canvas with integer jitter in
/// [-2,2]; labels cycle 0..9.
ImageSet synth_digits(Eigen::Index count, Rng& rng);

// ---- Splits: seeded shuffle, then contiguous partition.

/// k folds of sizes differing by at most one (larger folds first).
std::vector<std::vector<Eigen::Index>> split_folds(Eigen::Index n, int k,
                                                   std::uint64_t seed);

/// One partition per fraction; every part except the last is floored,
/// the last takes the remainder. Fractions must be positive and sum to 1.
std::vector<std::vector<Eigen::Index>> split_fractions(
    Eigen::Index n, const std::vector<double>& fractions, std::uint64_t seed);

}  // namespace kfan
