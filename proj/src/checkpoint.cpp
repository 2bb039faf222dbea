#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "kfan/error.hpp"
#include "kfan/kfan_network.hpp"

// Checkpoint container, version 1. Byte layout, all integers u32
// little-endian, all reals f64 little-endian:
//
//   "KFAN"
//   version, branch count K, shared_dim
//   per branch: name length, name bytes, dim count, dims (visible first,
//               then each hidden layer bottom-up)
//   per branch: per layer {weights row-major, visible bias, hidden bias},
//               then the branch's shared-layer weights row-major
//   shared-layer bias
//   CRC-32 (IEEE) of everything after the magic, up to this field
//
// load(save(net)) reproduces every byte of state.

namespace kfan {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxBranches = 64;
constexpr std::uint32_t kMaxLayers = 64;
constexpr std::uint32_t kMaxDim = 1u << 20;
constexpr std::uint32_t kMaxNameLen = 1u << 10;

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k)
            c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = make_crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

class Writer {
  public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        const auto u = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    void raw(const void* data, std::size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + len);
    }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
  public:
    Reader(const std::uint8_t* data, std::size_t len) : data_(data), len_(len) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return len_ - pos_; }

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64(const char* field) {
        need(8, field);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= std::uint64_t(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(u);
    }
    std::string str(std::size_t len, const char* field) {
        need(len, field);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
        pos_ += len;
        return s;
    }

  private:
    void need(std::size_t n, const char* field) {
        if (len_ - pos_ < n)
            throw FormatError(std::string("checkpoint truncated reading ") + field, pos_);
    }
    const std::uint8_t* data_;
    std::size_t len_;
    std::size_t pos_ = 0;
};

void write_matrix_row_major(Writer& w, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

Matrix read_matrix_row_major(Reader& r, Eigen::Index rows, Eigen::Index cols,
                             const char* field) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f64(field);
    return m;
}

Vector read_vector(Reader& r, Eigen::Index n, const char* field) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = r.f64(field);
    return v;
}

}  // namespace

void save_checkpoint(const KFanNetwork& net, const std::filesystem::path& path) {
    Writer body;
    body.u32(kVersion);
    body.u32(static_cast<std::uint32_t>(net.branches.size()));
    body.u32(static_cast<std::uint32_t>(net.shared_dim()));
    for (const Branch& br : net.branches) {
        body.u32(static_cast<std::uint32_t>(br.spec.name.size()));
        body.raw(br.spec.name.data(), br.spec.name.size());
        body.u32(static_cast<std::uint32_t>(1 + br.layers.size()));
        body.u32(static_cast<std::uint32_t>(br.layers.front().n_visible()));
        for (const Rbm& r : br.layers) body.u32(static_cast<std::uint32_t>(r.n_hidden()));
    }
    for (const Branch& br : net.branches) {
        for (const Rbm& r : br.layers) {
            write_matrix_row_major(body, r.weights);
            for (Eigen::Index i = 0; i < r.visible_bias.size(); ++i)
                body.f64(r.visible_bias(i));
            for (Eigen::Index i = 0; i < r.hidden_bias.size(); ++i)
                body.f64(r.hidden_bias(i));
        }
        write_matrix_row_major(body, br.top_weights);
    }
    for (Eigen::Index i = 0; i < net.top_bias.size(); ++i) body.f64(net.top_bias(i));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write("KFAN", 4);
    out.write(reinterpret_cast<const char*>(body.bytes().data()),
              static_cast<std::streamsize>(body.bytes().size()));
    Writer crc;
    crc.u32(crc32(body.bytes().data(), body.bytes().size()));
    out.write(reinterpret_cast<const char*>(crc.bytes().data()), 4);
    if (!out) throw Error("failed writing " + path.string());
}

KFanNetwork load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (bytes.size() < 4 || std::memcmp(bytes.data(), "KFAN", 4) != 0)
        throw FormatError("not a KFAN checkpoint", 0);
    if (bytes.size() < 8) throw FormatError("checkpoint truncated reading crc", bytes.size());

    // The CRC guards the body: everything between the magic and the
    // trailing checksum field.
    const std::size_t body_len = bytes.size() - 8;
    Reader tail(bytes.data() + 4 + body_len, 4);
    const std::uint32_t stored_crc = tail.u32("crc");
    const std::uint32_t actual_crc = crc32(bytes.data() + 4, body_len);
    if (stored_crc != actual_crc)
        throw FormatError("checkpoint checksum mismatch", 4 + body_len);

    Reader r(bytes.data() + 4, body_len);
    auto offset_of = [&] { return 4 + r.offset(); };

    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version", offset_of() - 4);
    const std::uint32_t k = r.u32("branch count");
    if (k == 0 || k > kMaxBranches)
        throw FormatError("branch count out of range", offset_of() - 4);
    const std::uint32_t shared_dim = r.u32("shared_dim");
    if (shared_dim == 0 || shared_dim > kMaxDim)
        throw FormatError("shared_dim out of range", offset_of() - 4);

    struct Shape {
        std::string name;
        std::vector<Eigen::Index> dims;
    };
    std::vector<Shape> shapes;
    for (std::uint32_t b = 0; b < k; ++b) {
        Shape s;
        const std::uint32_t name_len = r.u32("name length");
        if (name_len == 0 || name_len > kMaxNameLen)
            throw FormatError("branch name length out of range", offset_of() - 4);
        s.name = r.str(name_len, "branch name");
        const std::uint32_t dim_count = r.u32("dim count");
        if (dim_count < 2 || dim_count > kMaxLayers)
            throw FormatError("layer count out of range", offset_of() - 4);
        for (std::uint32_t i = 0; i < dim_count; ++i) {
            const std::uint32_t d = r.u32("layer dim");
            if (d == 0 || d > kMaxDim)
                throw FormatError("layer dim out of range", offset_of() - 4);
            s.dims.push_back(static_cast<Eigen::Index>(d));
        }
        shapes.push_back(std::move(s));
    }

    KFanNetwork net;
    for (const Shape& s : shapes) {
        Branch br;
        br.spec.name = s.name;
        br.spec.visible_dim = s.dims[0];
        br.spec.hidden_sizes.assign(s.dims.begin() + 1, s.dims.end());
        for (std::size_t l = 1; l < s.dims.size(); ++l) {
            Rbm rbm;
            rbm.weights = read_matrix_row_major(r, s.dims[l], s.dims[l - 1], "weights");
            rbm.visible_bias = read_vector(r, s.dims[l - 1], "visible bias");
            rbm.hidden_bias = read_vector(r, s.dims[l], "hidden bias");
            br.layers.push_back(std::move(rbm));
        }
        br.top_weights = read_matrix_row_major(
            r, static_cast<Eigen::Index>(shared_dim), s.dims.back(), "shared weights");
        net.branches.push_back(std::move(br));
    }
    net.top_bias = read_vector(r, static_cast<Eigen::Index>(shared_dim), "shared bias");
    if (r.remaining() != 0)
        throw FormatError("trailing bytes after checkpoint payload", offset_of());
    return net;
}

}  // namespace kfan
