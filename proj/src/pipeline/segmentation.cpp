#include "qfvs/segmentation.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "qfvs/checkpoint.hpp"

namespace qfvs {

std::vector<std::size_t> SegmentBoundaries::change_points() const {
    return starts.empty() ? std::vector<std::size_t>{} : std::vector<std::size_t>(starts.begin() + 1, starts.end());
}

void SegmentBoundaries::validate(const SegmentationConfig& cfg) const {
    std::size_t pos = 0;
    if (starts.size() != lengths.size()) throw ContractError("segment boundaries: starts/lengths size mismatch");
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (starts[i] != pos || lengths[i] == 0)
            throw ContractError("segment " + std::to_string(i) + " does not continue the partition at shot " + std::to_string(pos));
        if (lengths[i] > cfg.max_shots)
            throw ContractError("segment " + std::to_string(i) + " has " + std::to_string(lengths[i]) +
                                " shots, cap is " + std::to_string(cfg.max_shots));
        pos += lengths[i];
    }
    if (pos != total) throw ContractError("segments cover " + std::to_string(pos) + " of " + std::to_string(total) + " shots");
    if (!over_segment_cap && starts.size() > cfg.max_segments)
        throw ContractError(std::to_string(starts.size()) + " segments exceed cap " + std::to_string(cfg.max_segments));
}

SegmentBoundaries SegmentBoundaries::from_change_points(std::size_t total, const std::vector<std::size_t>& cps) {
    SegmentBoundaries b;
    b.total = total;
    std::size_t prev = 0;
    for (std::size_t cp : cps) {
        if (cp <= prev || cp >= total) throw ContractError("change points must be strictly increasing inside (0, N)");
        b.starts.push_back(prev);
        b.lengths.push_back(cp - prev);
        prev = cp;
    }
    b.starts.push_back(prev);
    b.lengths.push_back(total - prev);
    return b;
}

ScatterCost::ScatterCost(std::span<const real> features, std::size_t count, std::size_t dim) : n_(count) {
    if (count == 0) throw ContractError("segmentation needs at least one shot");
    if (features.size() != count * dim) throw ShapeError("segmentation: feature buffer does not match N x C");
    std::vector<real> x(features.begin(), features.end());
    for (std::size_t i = 0; i < count; ++i) {
        real nrm = 0;
        for (std::size_t d = 0; d < dim; ++d) nrm += x[i * dim + d] * x[i * dim + d];
        nrm = std::sqrt(nrm);
        if (nrm > 0)
            for (std::size_t d = 0; d < dim; ++d) x[i * dim + d] /= nrm;
    }
    auto gram = [&](std::size_t i, std::size_t j) {
        real s = 0;
        for (std::size_t d = 0; d < dim; ++d) s += x[i * dim + d] * x[j * dim + d];
        return s;
    };

    offset_.resize(count);
    std::size_t off = 0;
    for (std::size_t b = 0; b < count; ++b) {
        offset_[b] = off;
        off += count - b;
    }
    table_.resize(off);

    // block[e] = sum_{i,j in [b,e)} K_ij for the current b, built from b+1.
    std::vector<real> block(count + 1, 0), next_block(count + 1, 0);
    std::vector<real> diag_prefix(count + 1, 0);
    for (std::size_t i = 0; i < count; ++i) diag_prefix[i + 1] = diag_prefix[i] + gram(i, i);
    for (std::size_t b = count; b-- > 0;) {
        const real kbb = gram(b, b);
        real row = 0;  // sum_{j in (b, e)} K_bj
        for (std::size_t e = b + 1; e <= count; ++e) {
            if (e - 1 > b) row += gram(b, e - 1);
            const real inner = e - 1 > b ? block[e] : real{0};
            next_block[e] = inner + kbb + 2 * row;
            const real diag = diag_prefix[e] - diag_prefix[b];
            const real c = diag - next_block[e] / static_cast<real>(e - b);
            table_[offset_[b] + (e - b - 1)] = c > 0 ? c : real{0};
        }
        std::swap(block, next_block);
    }
}

std::vector<ChangePointFit> fit_change_points(const ScatterCost& cost, std::size_t max_change_points) {
    const std::size_t n = cost.size();
    const std::size_t mmax = std::min(max_change_points, n - 1);
    constexpr real inf = std::numeric_limits<real>::infinity();
    // best[j][t]: minimal cost of [0, t) cut into j+1 segments.
    std::vector<std::vector<real>> best(mmax + 1, std::vector<real>(n + 1, inf));
    std::vector<std::vector<std::size_t>> from(mmax + 1, std::vector<std::size_t>(n + 1, 0));
    for (std::size_t t = 1; t <= n; ++t) best[0][t] = cost(0, t);
    for (std::size_t j = 1; j <= mmax; ++j)
        for (std::size_t t = j + 1; t <= n; ++t)
            for (std::size_t s = j; s < t; ++s) {
                const real v = best[j - 1][s] + cost(s, t);
                if (v < best[j][t]) {
                    best[j][t] = v;
                    from[j][t] = s;
                }
            }
    std::vector<ChangePointFit> fits;
    for (std::size_t m = 0; m <= mmax; ++m) {
        ChangePointFit fit;
        fit.scatter = best[m][n];
        std::size_t t = n;
        for (std::size_t j = m; j > 0; --j) {
            t = from[j][t];
            fit.change_points.push_back(t);
        }
        std::reverse(fit.change_points.begin(), fit.change_points.end());
        fits.push_back(std::move(fit));
    }
    return fits;
}

SegmentBoundaries enforce_max_shots(const SegmentBoundaries& in, std::size_t max_shots) {
    SegmentBoundaries out;
    out.total = in.total;
    out.over_segment_cap = in.over_segment_cap;
    for (std::size_t i = 0; i < in.count(); ++i) {
        const std::size_t len = in.lengths[i];
        const std::size_t parts = (len + max_shots - 1) / max_shots;
        std::size_t pos = in.starts[i];
        for (std::size_t p = 0; p < parts; ++p) {
            const std::size_t piece = len / parts + (p < len % parts ? 1 : 0);
            out.starts.push_back(pos);
            out.lengths.push_back(piece);
            pos += piece;
        }
    }
    return out;
}

SegmentBoundaries kts_segment(std::span<const real> features, std::size_t count, std::size_t dim,
                              const SegmentationConfig& cfg) {
    if (count == 0) throw ContractError("kts_segment: empty shot sequence");
    if (cfg.max_segments == 0 || cfg.max_shots == 0) throw ConfigError("kts_segment: caps must be positive");

    if (count > cfg.max_segments * cfg.max_shots) {
        SegmentBoundaries whole;
        whole.total = count;
        whole.starts = {0};
        whole.lengths = {count};
        whole.over_segment_cap = true;
        return enforce_max_shots(whole, cfg.max_shots);
    }

    const ScatterCost cost(features, count, dim);
    const auto fits = fit_change_points(cost, cfg.max_segments - 1);
    const real log_n = std::log(static_cast<real>(count));
    bool found = false;
    SegmentBoundaries best;
    real best_objective = std::numeric_limits<real>::infinity();
    for (std::size_t m = 0; m < fits.size(); ++m) {
        SegmentBoundaries b = enforce_max_shots(SegmentBoundaries::from_change_points(count, fits[m].change_points), cfg.max_shots);
        if (b.count() > cfg.max_segments) continue;
        const real objective = fits[m].scatter + cfg.penalty * static_cast<real>(m) * log_n;
        if (objective < best_objective) {
            best_objective = objective;
            best = std::move(b);
            found = true;
        }
    }
    // m = 0 split evenly always fits once count <= max_segments * max_shots.
    if (!found) throw ContractError("kts_segment: no feasible segmentation");
    return best;
}

SegmentBoundaries kts_segment(const ShotSequence& shots, const SegmentationConfig& cfg) {
    return kts_segment(shots.features, shots.size(), shots.feature_dim, cfg);
}

std::size_t SegmentedVideo::valid_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
}

std::vector<std::size_t> SegmentedVideo::valid_slots() const {
    std::vector<std::size_t> slots(valid_count());
    for (std::size_t i = 0; i < shot_index.size(); ++i)
        if (shot_index[i] >= 0) slots[static_cast<std::size_t>(shot_index[i])] = i;
    return slots;
}

SegmentedVideo build_segmented(const ShotSequence& shots, const SegmentBoundaries& boundaries, std::size_t slots) {
    if (boundaries.total != shots.size())
        throw ContractError("boundaries cover " + std::to_string(boundaries.total) + " shots, video has " +
                            std::to_string(shots.size()));
    SegmentationConfig caps;
    caps.max_shots = slots;
    caps.max_segments = std::max<std::size_t>(boundaries.count(), 1);
    boundaries.validate(caps);

    const std::size_t segs = boundaries.count(), dim = shots.feature_dim;
    SegmentedVideo out;
    out.boundaries = boundaries;
    out.mask.assign(segs * slots, 0);
    out.shot_index.assign(segs * slots, -1);
    std::vector<real> data(segs * slots * dim, real{0});
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t t = 0; t < boundaries.lengths[s]; ++t) {
            const std::size_t shot = boundaries.starts[s] + t;
            const std::size_t slot = s * slots + t;
            out.mask[slot] = 1;
            out.shot_index[slot] = static_cast<std::int64_t>(shot);
            const auto f = shots.feature(shot);
            std::copy(f.begin(), f.end(), data.begin() + slot * dim);
        }
    out.features = Tensor::from_data({segs, slots, dim}, std::move(data));
    return out;
}

std::vector<real> flatten(const SegmentedVideo& video) {
    const std::size_t dim = video.dim();
    const auto slots = video.valid_slots();
    const auto d = video.features.data();
    std::vector<real> out(slots.size() * dim);
    for (std::size_t i = 0; i < slots.size(); ++i)
        std::copy_n(d.begin() + slots[i] * dim, dim, out.begin() + i * dim);
    return out;
}

void write_boundaries(const std::filesystem::path& path, const SegmentBoundaries& b) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    for (std::size_t s : b.starts) os << s << '\n';
}

SegmentBoundaries read_boundaries(const std::filesystem::path& path, std::size_t total) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    std::vector<std::size_t> starts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            std::size_t used = 0;
            starts.push_back(std::stoull(line, &used));
            if (used != line.size()) throw std::invalid_argument(line);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected a shot index");
        }
    }
    if (starts.empty() || starts.front() != 0) throw FormatError(path.string() + ": first segment must start at 0");
    return SegmentBoundaries::from_change_points(total, std::vector<std::size_t>(starts.begin() + 1, starts.end()));
}

}  // namespace qfvs
