#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iseat/errors.hpp"
#include "iseat/tensor.hpp"

namespace iseat {

enum class SyntheticKind { blobs, moons, circles };

inline const char* synthetic_kind_name(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::blobs: return "blobs";
        case SyntheticKind::moons: return "moons";
        case SyntheticKind::circles: return "circles";
    }
    return "?";
}

// Immutable after construction; inputs always live in [0,1].
struct Dataset {
    nd::Tensor<double> inputs;  // [n×d]
    std::vector<int> labels;
    std::string name;
    std::string provenance;  // "seed:<s>" or "digest:<fnv64 of the source bytes>"

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return inputs.cols(); }
    std::size_t num_classes() const;
    void validate() const;
};

// Seeded 2-D generators; features are affinely mapped into [0.05, 0.95]² and
// clipped to [0,1]. Classes are balanced to within one sample.
Dataset gen_synthetic(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed);

// IDX ingestion: big-endian magic 0x00000803 (images) / 0x00000801 (labels),
// pixel bytes scaled into [0,1], images flattened row-major.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writer for fixtures and round-trip tests; pixels are quantized to bytes.
void save_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
              const std::string& images_path, const std::string& labels_path);

struct SplitResult {
    Dataset train;
    Dataset test;
};

SplitResult split(const Dataset& ds, double test_fraction, std::uint64_t seed);

// Seeded batch order for one epoch; the union of all batches is exactly the
// index set, last partial batch kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch);

Dataset take(const Dataset& ds, const std::vector<std::size_t>& idx);

std::uint64_t fnv1a64(const void* data, std::size_t len);

}  // namespace iseat
