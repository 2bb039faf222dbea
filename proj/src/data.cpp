#include "kfan/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "kfan/error.hpp"

namespace kfan {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

class ByteReader {
  public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint32_t u32_be(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
        pos_ += 4;
        return v;
    }
    std::uint32_t u32_le(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64_le(const char* field) {
        need(8, field);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(u);
    }
    std::uint8_t byte(const char* field) {
        need(1, field);
        return bytes_[pos_++];
    }
    void skip(std::size_t n, const char* field) {
        need(n, field);
        pos_ += n;
    }

    void need(std::size_t n, const char* field) {
        if (bytes_.size() - pos_ < n)
            throw FormatError(std::string("truncated reading ") + field, pos_);
    }

  private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

void push_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void push_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void push_f64_le(std::vector<std::uint8_t>& out, double v) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

constexpr std::uint32_t kMaxIdxDim = 1u << 20;

std::uint32_t checked_dim(ByteReader& r, const char* field) {
    const std::size_t at = r.offset();
    const std::uint32_t v = r.u32_be(field);
    if (v == 0 || v > kMaxIdxDim)
        throw FormatError(std::string(field) + " out of range", at);
    return v;
}

/// Fisher-Yates with one uniform draw per element, highest index first.
std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, std::uint64_t seed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(
            rng.next_uniform() * static_cast<double>(i + 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
}

}  // namespace

std::vector<Eigen::Index> TripletDataset::class_indices() const {
    std::vector<Eigen::Index> out;
    out.reserve(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c)
            if (z(i, c) > z(i, best)) best = c;
        out.push_back(best);
    }
    return out;
}

ImageSet load_idx_images(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes);
    const std::size_t magic_at = r.offset();
    const std::uint32_t magic = r.u32_be("magic");
    if (magic != kIdxImagesMagic)
        throw FormatError("not an IDX image file", magic_at);
    const std::uint32_t n = r.u32_be("image count");
    const std::uint32_t h = checked_dim(r, "height");
    const std::uint32_t w = checked_dim(r, "width");
    ImageSet set;
    set.height = h;
    set.width = w;
    set.images.resize(n, static_cast<Eigen::Index>(h) * w);
    r.need(std::size_t(n) * h * w, "pixel payload");
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t p = 0; p < h * w; ++p)
            set.images(i, p) = static_cast<double>(r.byte("pixel")) / 255.0;
    if (r.remaining() != 0)
        throw FormatError("trailing bytes after pixel payload", r.offset());
    return set;
}

std::vector<Eigen::Index> load_idx_labels(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes);
    const std::size_t magic_at = r.offset();
    const std::uint32_t magic = r.u32_be("magic");
    if (magic != kIdxLabelsMagic)
        throw FormatError("not an IDX label file", magic_at);
    const std::uint32_t n = r.u32_be("label count");
    std::vector<Eigen::Index> labels;
    labels.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i)
        labels.push_back(static_cast<Eigen::Index>(r.byte("label")));
    if (r.remaining() != 0)
        throw FormatError("trailing bytes after label payload", r.offset());
    return labels;
}

std::variant<ImageSet, std::vector<Eigen::Index>> load_idx(
    const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes);
    const std::uint32_t magic = r.u32_be("magic");
    if (magic == kIdxImagesMagic) return load_idx_images(path);
    if (magic == kIdxLabelsMagic) return load_idx_labels(path);
    throw FormatError("unrecognized IDX magic", 0);
}

void write_idx_images(const std::filesystem::path& path, const ImageSet& images) {
    std::vector<std::uint8_t> out;
    push_u32_be(out, kIdxImagesMagic);
    push_u32_be(out, static_cast<std::uint32_t>(images.count()));
    push_u32_be(out, static_cast<std::uint32_t>(images.height));
    push_u32_be(out, static_cast<std::uint32_t>(images.width));
    for (Eigen::Index i = 0; i < images.count(); ++i)
        for (Eigen::Index p = 0; p < images.images.cols(); ++p) {
            const double v = std::clamp(images.images(i, p), 0.0, 1.0);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        }
    write_file(path, out);
}

void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<Eigen::Index>& labels) {
    std::vector<std::uint8_t> out;
    push_u32_be(out, kIdxLabelsMagic);
    push_u32_be(out, static_cast<std::uint32_t>(labels.size()));
    for (Eigen::Index l : labels) {
        if (l < 0 || l > 255) throw DomainError("label outside byte range");
        out.push_back(static_cast<std::uint8_t>(l));
    }
    write_file(path, out);
}

ImageSet binarize(const ImageSet& images, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw DomainError("threshold must lie in (0, 1)");
    ImageSet out = images;
    out.images = images.images.unaryExpr(
        [threshold](double v) { return v >= threshold ? 1.0 : 0.0; });
    return out;
}

TripletDataset make_triplets(const ImageSet& clean, const NoiseConfig& cfg,
                             int copies_per_image, Rng& rng) {
    if (!clean.labeled()) throw DomainError("triplets need labeled images");
    if (copies_per_image < 1) throw DomainError("copies_per_image must be positive");
    Eigen::Index num_classes = 0;
    for (Eigen::Index l : clean.labels) {
        if (l < 0) throw DomainError("labels must be non-negative");
        num_classes = std::max(num_classes, l + 1);
    }
    const Eigen::Index n = clean.count() * copies_per_image;
    TripletDataset out;
    out.x.resize(n, clean.images.cols());
    out.y.resize(n, clean.images.cols());
    out.z = Matrix::Zero(n, num_classes);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < clean.count(); ++i) {
        const Vector image = clean.images.row(i).transpose();
        for (int c = 0; c < copies_per_image; ++c, ++row) {
            StrokeResult noisy =
                add_stroke_noise(image, clean.height, clean.width, cfg, rng);
            out.x.row(row) = noisy.image.transpose();
            out.y.row(row) = image.transpose();
            out.z(row, clean.labels[static_cast<std::size_t>(i)]) = 1.0;
        }
    }
    return out;
}

namespace {

KmvdHeader parse_kmvd_header(const std::vector<std::uint8_t>& bytes, ByteReader& r) {
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), "KMVD", 4) != 0)
        throw FormatError("not a KMVD record file", 0);
    r.skip(4, "magic");
    KmvdHeader h;
    h.count = r.u32_le("record count");
    h.d_x = r.u32_le("feature width");
    h.d_view = r.u32_le("view width");
    h.num_classes = r.u32_le("class count");
    if (h.d_x <= 0 || h.d_x > static_cast<Eigen::Index>(kMaxIdxDim))
        throw FormatError("feature width out of range", 8);
    if (h.d_view <= 0 || h.d_view > static_cast<Eigen::Index>(kMaxIdxDim))
        throw FormatError("view width out of range", 12);
    if (h.num_classes <= 0 || h.num_classes > 255)
        throw FormatError("class count out of range", 16);
    return h;
}

}  // namespace

KmvdHeader read_kmvd_header(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes);
    return parse_kmvd_header(bytes, r);
}

TripletDataset load_multiview(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes);
    const KmvdHeader h = parse_kmvd_header(bytes, r);

    TripletDataset out;
    out.x.resize(h.count, h.d_x);
    out.y.resize(h.count, h.d_view);
    out.z = Matrix::Zero(h.count, h.num_classes);
    for (Eigen::Index i = 0; i < h.count; ++i) {
        for (Eigen::Index j = 0; j < h.d_x; ++j) {
            const std::size_t at = r.offset();
            const double v = r.f64_le("feature");
            if (!(v >= 0.0 && v <= 1.0))
                throw FormatError("feature outside [0,1]", at);
            out.x(i, j) = v;
        }
        for (Eigen::Index j = 0; j < h.d_view; ++j) {
            const std::size_t at = r.offset();
            const std::uint8_t b = r.byte("view bit");
            if (b > 1) throw FormatError("view indicator not 0/1", at);
            out.y(i, j) = b;
        }
        const std::size_t at = r.offset();
        const std::uint8_t cls = r.byte("class");
        if (cls >= h.num_classes) throw FormatError("class byte out of range", at);
        out.z(i, cls) = 1.0;
    }
    if (r.remaining() != 0)
        throw FormatError("trailing bytes after records", r.offset());
    return out;
}

void write_kmvd(const std::filesystem::path& path, const TripletDataset& data) {
    if (data.num_classes() > 255) throw DomainError("too many classes for one byte");
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'K', 'M', 'V', 'D'});
    push_u32_le(out, static_cast<std::uint32_t>(data.count()));
    push_u32_le(out, static_cast<std::uint32_t>(data.x.cols()));
    push_u32_le(out, static_cast<std::uint32_t>(data.y.cols()));
    push_u32_le(out, static_cast<std::uint32_t>(data.num_classes()));
    const std::vector<Eigen::Index> classes = data.class_indices();
    for (Eigen::Index i = 0; i < data.count(); ++i) {
        for (Eigen::Index j = 0; j < data.x.cols(); ++j) push_f64_le(out, data.x(i, j));
        for (Eigen::Index j = 0; j < data.y.cols(); ++j) {
            const double v = data.y(i, j);
            if (v != 0.0 && v != 1.0) throw DomainError("view entries must be 0/1");
            out.push_back(static_cast<std::uint8_t>(v));
        }
        out.push_back(static_cast<std::uint8_t>(classes[static_cast<std::size_t>(i)]));
    }
    write_file(path, out);
}

std::vector<std::vector<Eigen::Index>> split_folds(Eigen::Index n, int k,
                                                   std::uint64_t seed) {
    if (k < 2) throw DomainError("need at least two folds");
    if (static_cast<Eigen::Index>(k) > n) throw DomainError("more folds than examples");
    const std::vector<Eigen::Index> order = shuffled_indices(n, seed);
    std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(k));
    const Eigen::Index base = n / k;
    const Eigen::Index extra = n % k;
    std::size_t at = 0;
    for (int f = 0; f < k; ++f) {
        const Eigen::Index size = base + (f < extra ? 1 : 0);
        auto& fold = folds[static_cast<std::size_t>(f)];
        fold.assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                    order.begin() + static_cast<std::ptrdiff_t>(at + size));
        at += static_cast<std::size_t>(size);
    }
    return folds;
}

std::vector<std::vector<Eigen::Index>> split_fractions(
    Eigen::Index n, const std::vector<double>& fractions, std::uint64_t seed) {
    if (fractions.size() < 2) throw DomainError("need at least two fractions");
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw DomainError("fractions must be positive");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("fractions must sum to 1");
    if (n < static_cast<Eigen::Index>(fractions.size()))
        throw DomainError("more parts than examples");

    const std::vector<Eigen::Index> order = shuffled_indices(n, seed);
    std::vector<std::vector<Eigen::Index>> parts(fractions.size());
    std::size_t at = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
        const Eigen::Index size =
            (p + 1 == fractions.size())
                ? n - static_cast<Eigen::Index>(at)
                : static_cast<Eigen::Index>(fractions[p] * static_cast<double>(n));
        parts[p].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                        order.begin() + static_cast<std::ptrdiff_t>(at) + size);
        at += static_cast<std::size_t>(size);
    }
    return parts;
}

}  // namespace kfan
