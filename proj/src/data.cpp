#include "iseat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "iseat/rng.hpp"

namespace iseat {

std::size_t Dataset::num_classes() const {
    int mx = 0;
    for (const int y : labels) mx = std::max(mx, y);
    return static_cast<std::size_t>(mx) + 1;
}

void Dataset::validate() const {
    if (labels.empty()) throw ShapeError("dataset is empty");
    if (inputs.rank() != 2 || inputs.rows() != labels.size())
        throw ShapeError("dataset inputs " + inputs.shape_str() + " inconsistent with " +
                         std::to_string(labels.size()) + " labels");
    for (const double v : inputs.values())
        if (!(v >= 0.0 && v <= 1.0))
            throw NumericError("dataset feature outside [0,1]: " + std::to_string(v));
    for (const int y : labels)
        if (y < 0) throw ShapeError("negative label");
}

namespace {

double squeeze(double v, double lo, double hi) {
    // nominal [lo,hi] -> [0.05,0.95], then clip to [0,1]
    const double t = 0.05 + 0.9 * (v - lo) / (hi - lo);
    return std::clamp(t, 0.0, 1.0);
}

}  // namespace

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2) throw ConfigError("dataset.n", "must be >= 2");
    if (!(noise >= 0)) throw ConfigError("dataset.noise", "must be >= 0");

    Dataset ds;
    ds.name = synthetic_kind_name(kind);
    ds.provenance = "seed:" + std::to_string(seed);
    ds.inputs = nd::Tensor<double>({n, 2});
    ds.labels.resize(n);
    Rng rng(seed);

    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        double px = 0, py = 0;
        switch (kind) {
            case SyntheticKind::blobs: {
                const double cx = label == 0 ? -1.0 : 1.0;
                const double cy = label == 0 ? -1.0 : 1.0;
                px = squeeze(cx + noise * rng.normal(), -2.0, 2.0);
                py = squeeze(cy + noise * rng.normal(), -2.0, 2.0);
                break;
            }
            case SyntheticKind::moons: {
                const double t = rng.uniform(0.0, std::numbers::pi);
                double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
                double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
                x += noise * rng.normal();
                y += noise * rng.normal();
                px = squeeze(x, -1.0, 2.0);
                py = squeeze(y, -0.5, 1.0);
                break;
            }
            case SyntheticKind::circles: {
                const double r = label == 0 ? 1.0 : 0.5;
                const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
                px = squeeze(r * std::cos(a) + noise * rng.normal(), -1.3, 1.3);
                py = squeeze(r * std::sin(a) + noise * rng.normal(), -1.3, 1.3);
                break;
            }
        }
        ds.inputs.at(i, 0) = px;
        ds.inputs.at(i, 1) = py;
        ds.labels[i] = label;
    }
    ds.validate();
    return ds;
}

namespace {

struct ByteReader {
    std::vector<unsigned char> bytes;
    std::string path;

    std::uint32_t be32(std::size_t offset) const {
        if (offset + 4 > bytes.size())
            throw DataError(DataError::Kind::truncated, bytes.size(),
                            path + ": truncated header, need 4 bytes at offset " +
                                std::to_string(offset));
        return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
               (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
    }
};

ByteReader read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    ByteReader r;
    r.path = path;
    r.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const ByteReader img = read_file(images_path);
    const std::uint32_t img_magic = img.be32(0);
    if (img_magic != kImagesMagic) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "bad image magic 0x%08x, expected 0x%08x", img_magic,
                      kImagesMagic);
        throw DataError(DataError::Kind::bad_magic, 0, images_path + ": " + std::string(buf));
    }
    const std::uint32_t n = img.be32(4);
    const std::uint32_t rows = img.be32(8);
    const std::uint32_t cols = img.be32(12);
    const std::size_t pixel_count = std::size_t(n) * rows * cols;
    if (img.bytes.size() < 16 + pixel_count)
        throw DataError(DataError::Kind::truncated, img.bytes.size(),
                        images_path + ": expected " + std::to_string(16 + pixel_count) +
                            " bytes, got " + std::to_string(img.bytes.size()));

    const ByteReader lab = read_file(labels_path);
    const std::uint32_t lab_magic = lab.be32(0);
    if (lab_magic != kLabelsMagic) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "bad label magic 0x%08x, expected 0x%08x", lab_magic,
                      kLabelsMagic);
        throw DataError(DataError::Kind::bad_magic, 0, labels_path + ": " + std::string(buf));
    }
    const std::uint32_t n_labels = lab.be32(4);
    if (n_labels != n)
        throw DataError(DataError::Kind::count_mismatch, 4,
                        labels_path + ": label count " + std::to_string(n_labels) +
                            " does not match image count " + std::to_string(n));
    if (lab.bytes.size() < 8 + n_labels)
        throw DataError(DataError::Kind::truncated, lab.bytes.size(),
                        labels_path + ": expected " + std::to_string(8 + n_labels) +
                            " bytes, got " + std::to_string(lab.bytes.size()));
    if (n == 0) throw DataError(DataError::Kind::count_mismatch, 4, images_path + ": zero images");

    Dataset ds;
    ds.name = "idx";
    const std::uint64_t digest =
        fnv1a64(img.bytes.data(), img.bytes.size()) ^ fnv1a64(lab.bytes.data(), lab.bytes.size());
    ds.provenance = "digest:" + std::to_string(digest);
    ds.inputs = nd::Tensor<double>({n, std::size_t(rows) * cols});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < pixel_count; ++i)
        ds.inputs[i] = static_cast<double>(img.bytes[16 + i]) / 255.0;
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(lab.bytes[8 + i]);
    ds.validate();
    return ds;
}

void save_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
              const std::string& images_path, const std::string& labels_path) {
    ds.validate();
    if (rows * cols != ds.dim())
        throw ShapeError("save_idx: rows*cols != feature dim " + std::to_string(ds.dim()));
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot write " + images_path);
    write_be32(img, kImagesMagic);
    write_be32(img, static_cast<std::uint32_t>(ds.size()));
    write_be32(img, static_cast<std::uint32_t>(rows));
    write_be32(img, static_cast<std::uint32_t>(cols));
    for (const double v : ds.inputs.values()) {
        const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        const unsigned char b = static_cast<unsigned char>(q);
        img.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!img) throw IoError("short write to " + images_path);

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot write " + labels_path);
    write_be32(lab, kLabelsMagic);
    write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (const int y : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(y);
        lab.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!lab) throw IoError("short write to " + labels_path);
}

Dataset take(const Dataset& ds, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.name = ds.name;
    out.provenance = ds.provenance;
    out.inputs = nd::Tensor<double>({idx.size(), ds.dim()});
    out.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out.inputs.at(i, j) = ds.inputs.at(idx[i], j);
        out.labels[i] = ds.labels[idx[i]];
    }
    return out;
}

SplitResult split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("dataset.test_fraction", "must be in (0,1)");
    ds.validate();
    Rng rng(mix_seed(seed, 0x5b1a2ULL));
    const auto perm = rng.permutation(ds.size());
    const std::size_t test_n =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size())));
    std::vector<std::size_t> test_idx(perm.begin(), perm.begin() + test_n);
    std::vector<std::size_t> train_idx(perm.begin() + test_n, perm.end());
    return {take(ds, train_idx), take(ds, test_idx)};
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size == 0) throw ConfigError("train.batch_size", "must be >= 1");
    Rng rng(mix_seed(seed, epoch, 0xba7c4e5ULL));
    const auto perm = rng.permutation(n);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        out.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return out;
}

}  // namespace iseat
