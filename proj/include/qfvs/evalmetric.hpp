#pragma once

// Summary evaluation by tag overlap: every (ground truth, machine) shot pair
// is weighted by the IoU of their tag sets, the maximum-weight bipartite
// matching is found, and its total weight gives precision and recall.

#include <iosfwd>
#include <span>
#include <vector>

#include "qfvs/video.hpp"

namespace qfvs {

// |a & b| / |a | b|; 0 when both are empty.
real iou(const TagSet& a, const TagSet& b);

struct MatchedPair {
    std::size_t row = 0;  // ground truth position (or shot index in reports)
    std::size_t col = 0;  // machine position
    real weight = 0;

    bool operator==(const MatchedPair&) const = default;
};

// weights is rows x cols, row-major, non-negative. Hungarian algorithm on the
// zero-padded square matrix. Pairs with zero weight are omitted.
std::vector<MatchedPair> max_weight_matching(std::span<const real> weights, std::size_t rows, std::size_t cols);

// Sum of pair weights in row order.
real matching_total(const std::vector<MatchedPair>& pairs);

struct EvalReport {
    real precision = 0;
    real recall = 0;
    real f1 = 0;
    real matched_weight = 0;
    std::size_t gt_size = 0;
    std::size_t machine_size = 0;
    bool empty_gt = false;
    bool empty_machine = false;
    std::vector<MatchedPair> pairs;  // (gt shot, machine shot, IoU)
};

// Shot lists index into `tags`. Empty gt or machine lists give zeros with
// the matching flag set.
EvalReport evaluate_summary(std::span<const std::size_t> gt, std::span<const std::size_t> machine,
                            std::span<const TagSet> tags);

real f1_score(real precision, real recall);

// key = value lines; pairs as "pair = gt machine weight".
void write_report(std::ostream& os, const EvalReport& r);

}  // namespace qfvs
