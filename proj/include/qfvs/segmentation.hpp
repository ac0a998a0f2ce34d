#pragma once

// Kernel temporal segmentation of a shot sequence into at most
// `max_segments` contiguous segments of at most `max_shots` shots, and the
// padded [S,T,C] layout consumed by the network.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qfvs/tensor.hpp"
#include "qfvs/video.hpp"

namespace qfvs {

struct SegmentationConfig {
    std::size_t max_segments = 20;
    std::size_t max_shots = 200;
    // Penalty weight lambda in  scatter + lambda * m * log(N).
    real penalty = 0.25;
};

struct SegmentBoundaries {
    std::size_t total = 0;
    std::vector<std::size_t> starts;   // ascending, starts[0] == 0
    std::vector<std::size_t> lengths;
    // N exceeded max_segments * max_shots; the video was split evenly into
    // ceil(N / max_shots) segments.
    bool over_segment_cap = false;

    std::size_t count() const { return starts.size(); }
    // Interior segment starts (exclusive ends of the preceding segments).
    std::vector<std::size_t> change_points() const;
    // Throws ContractError unless the segments partition [0, total) within caps.
    void validate(const SegmentationConfig& cfg) const;

    static SegmentBoundaries from_change_points(std::size_t total, const std::vector<std::size_t>& change_points);
};

// Within-segment scatter under a linear kernel on L2-normalised features:
// cost(b, e) = sum_i K_ii - (1/(e-b)) sum_{i,j} K_ij over i, j in [b, e).
class ScatterCost {
   public:
    ScatterCost(std::span<const real> features, std::size_t count, std::size_t dim);

    std::size_t size() const { return n_; }
    real operator()(std::size_t begin, std::size_t end) const { return table_[offset_[begin] + (end - begin - 1)]; }

   private:
    std::size_t n_;
    std::vector<std::size_t> offset_;
    std::vector<real> table_;  // packed upper triangle, row b holds ends b+1..n
};

struct ChangePointFit {
    std::vector<std::size_t> change_points;
    real scatter = 0;
};

// Optimal placement for every m = 0..max_change_points (clipped to N-1);
// ties resolve to the earliest split.
std::vector<ChangePointFit> fit_change_points(const ScatterCost& cost, std::size_t max_change_points);

SegmentBoundaries kts_segment(std::span<const real> features, std::size_t count, std::size_t dim,
                              const SegmentationConfig& cfg = {});
SegmentBoundaries kts_segment(const ShotSequence& shots, const SegmentationConfig& cfg = {});

// Splits every segment longer than max_shots into near-equal pieces.
SegmentBoundaries enforce_max_shots(const SegmentBoundaries& b, std::size_t max_shots);

struct SegmentedVideo {
    Tensor features;                       // [S,T,C], zero where padded
    std::vector<std::uint8_t> mask;        // S*T
    std::vector<std::int64_t> shot_index;  // S*T, original shot or -1
    SegmentBoundaries boundaries;

    std::size_t segments() const { return features.shape()[0]; }
    std::size_t slots() const { return features.shape()[1]; }
    std::size_t dim() const { return features.shape()[2]; }
    std::size_t valid_count() const;
    // Flat slot index of every valid shot, in original shot order.
    std::vector<std::size_t> valid_slots() const;
};

// `slots` is the padded segment length T; every segment must fit.
SegmentedVideo build_segmented(const ShotSequence& shots, const SegmentBoundaries& boundaries, std::size_t slots);
// Valid rows back in original shot order, N * C.
std::vector<real> flatten(const SegmentedVideo& video);

// One segment start index per line.
void write_boundaries(const std::filesystem::path& path, const SegmentBoundaries& b);
SegmentBoundaries read_boundaries(const std::filesystem::path& path, std::size_t total);

}  // namespace qfvs
