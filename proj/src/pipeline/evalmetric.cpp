#include "qfvs/evalmetric.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <string>

#include "qfvs/config.hpp"
#include "qfvs/tensor.hpp"

namespace qfvs {

real iou(const TagSet& a, const TagSet& b) {
    const auto& x = a.ids();
    const auto& y = b.ids();
    std::size_t inter = 0, i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        if (x[i] == y[j]) {
            ++inter, ++i, ++j;
        } else if (x[i] < y[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = x.size() + y.size() - inter;
    return uni == 0 ? real{0} : static_cast<real>(inter) / static_cast<real>(uni);
}

std::vector<MatchedPair> max_weight_matching(std::span<const real> weights, std::size_t rows, std::size_t cols) {
    if (weights.size() != rows * cols) throw ShapeError("max_weight_matching: weight buffer is not rows x cols");
    for (real w : weights)
        if (!(w >= 0)) throw ContractError("max_weight_matching: weights must be non-negative");
    const std::size_t n = std::max(rows, cols);
    if (n == 0) return {};
    auto cost = [&](std::size_t i, std::size_t j) {  // 1-based, minimised
        return (i <= rows && j <= cols) ? -weights[(i - 1) * cols + (j - 1)] : real{0};
    };

    constexpr real inf = std::numeric_limits<real>::infinity();
    std::vector<real> u(n + 1, 0), v(n + 1, 0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<real> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            real delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j)
                if (!used[j]) {
                    const real cur = cost(i0, j) - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<MatchedPair> pairs;
    for (std::size_t j = 1; j <= n; ++j) {
        const std::size_t i = p[j];
        if (i == 0 || i > rows || j > cols) continue;
        const real w = weights[(i - 1) * cols + (j - 1)];
        if (w > 0) pairs.push_back({i - 1, j - 1, w});
    }
    std::sort(pairs.begin(), pairs.end(), [](const MatchedPair& a, const MatchedPair& b) { return a.row < b.row; });
    return pairs;
}

real matching_total(const std::vector<MatchedPair>& pairs) {
    real s = 0;
    for (const auto& p : pairs) s += p.weight;
    return s;
}

real f1_score(real precision, real recall) {
    return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : real{0};
}

EvalReport evaluate_summary(std::span<const std::size_t> gt, std::span<const std::size_t> machine,
                            std::span<const TagSet> tags) {
    EvalReport r;
    r.gt_size = gt.size();
    r.machine_size = machine.size();
    r.empty_gt = gt.empty();
    r.empty_machine = machine.empty();
    for (auto list : {gt, machine})
        for (auto s : list)
            if (s >= tags.size())
                throw ContractError("summary references shot " + std::to_string(s) + " of a " +
                                    std::to_string(tags.size()) + "-shot video");
    if (r.empty_gt || r.empty_machine) return r;

    std::vector<real> w(gt.size() * machine.size());
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t j = 0; j < machine.size(); ++j) w[i * machine.size() + j] = iou(tags[gt[i]], tags[machine[j]]);
    auto pairs = max_weight_matching(w, gt.size(), machine.size());
    r.matched_weight = matching_total(pairs);
    for (auto& p : pairs) r.pairs.push_back({gt[p.row], machine[p.col], p.weight});
    r.precision = r.matched_weight / static_cast<real>(machine.size());
    r.recall = r.matched_weight / static_cast<real>(gt.size());
    r.f1 = f1_score(r.precision, r.recall);
    return r;
}

void write_report(std::ostream& os, const EvalReport& r) {
    os << "precision = " << format_real(r.precision) << '\n'
       << "recall = " << format_real(r.recall) << '\n'
       << "f1 = " << format_real(r.f1) << '\n'
       << "matched_weight = " << format_real(r.matched_weight) << '\n'
       << "gt_size = " << r.gt_size << '\n'
       << "machine_size = " << r.machine_size << '\n'
       << "empty_gt = " << (r.empty_gt ? 1 : 0) << '\n'
       << "empty_machine = " << (r.empty_machine ? 1 : 0) << '\n';
    for (const auto& p : r.pairs) os << "pair = " << p.row << ' ' << p.col << ' ' << format_real(p.weight) << '\n';
}

}  // namespace qfvs
