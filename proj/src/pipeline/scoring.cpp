#include "qfvs/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "qfvs/checkpoint.hpp"

namespace qfvs {

void ScoringConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("scoring config: " + msg); };
    if (visual_dim == 0 || visual_hidden == 0 || query_dim == 0 || query_hidden == 0 || joint_dim == 0)
        fail("dimensions must be positive");
    for (auto h : mlp_hidden)
        if (h == 0) fail("MLP hidden widths must be positive");
    if (!(summary_ratio > 0 && summary_ratio <= 1)) fail("summary_ratio must lie in (0, 1]");
    if (!(clamp_eps > 0 && clamp_eps < 0.5)) fail("clamp_eps must lie in (0, 0.5)");
}

KeyValues to_key_values(const ScoringConfig& c) {
    return {
        {"scoring.visual_dim", std::to_string(c.visual_dim)},
        {"scoring.visual_hidden", std::to_string(c.visual_hidden)},
        {"scoring.query_dim", std::to_string(c.query_dim)},
        {"scoring.query_hidden", std::to_string(c.query_hidden)},
        {"scoring.joint_dim", std::to_string(c.joint_dim)},
        {"scoring.mlp_hidden", format_size_list(c.mlp_hidden)},
        {"scoring.summary_ratio", format_real(c.summary_ratio)},
        {"scoring.clamp_eps", format_real(c.clamp_eps)},
    };
}

void apply_key_values(ScoringConfig& c, KeyValues& kv) {
    auto take = [&](const char* key, auto&& assign) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        assign(it->first, it->second);
        kv.erase(it);
    };
    auto size_field = [&](const char* key, std::size_t& f) {
        take(key, [&](const std::string& k, const std::string& v) { f = parse_size(k, v); });
    };
    auto real_field = [&](const char* key, real& f) {
        take(key, [&](const std::string& k, const std::string& v) { f = parse_real(k, v); });
    };
    size_field("scoring.visual_dim", c.visual_dim);
    size_field("scoring.visual_hidden", c.visual_hidden);
    size_field("scoring.query_dim", c.query_dim);
    size_field("scoring.query_hidden", c.query_hidden);
    size_field("scoring.joint_dim", c.joint_dim);
    take("scoring.mlp_hidden", [&](const std::string& k, const std::string& v) { c.mlp_hidden = parse_size_list(k, v); });
    real_field("scoring.summary_ratio", c.summary_ratio);
    real_field("scoring.clamp_eps", c.clamp_eps);
}

Tensor fuse(const Tensor& v, const Tensor& q) {
    if (v.rank() != 2 || q.numel() != v.shape()[1])
        throw ShapeError("fuse: visual " + to_string(v.shape()) + " vs query " + to_string(q.shape()));
    const std::vector<std::size_t> rows(v.shape()[0], 0);
    Tensor qb = index_select(reshape(q, {1, q.numel()}), rows);
    return concat({add(v, qb), mul(v, qb), v, qb}, 1);
}

ScoringHead::Dense ScoringHead::dense(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                                      Rng& rng) {
    return {store.add(name + ".weight", kaiming_uniform({in, out}, in, rng)),
            store.add(name + ".bias", Tensor::zeros({out}, true))};
}

ScoringHead::ScoringHead(const ScoringConfig& cfg, ParameterStore& store, Rng& init_rng) : cfg_(cfg) {
    cfg_.validate();
    v1_ = dense(store, "score.visual1", cfg_.visual_dim, cfg_.visual_hidden, init_rng);
    v2_ = dense(store, "score.visual2", cfg_.visual_hidden, cfg_.joint_dim, init_rng);
    q1_ = dense(store, "score.query1", cfg_.query_dim, cfg_.query_hidden, init_rng);
    q2_ = dense(store, "score.query2", cfg_.query_hidden, cfg_.joint_dim, init_rng);
    std::size_t in = cfg_.fused_dim();
    for (std::size_t i = 0; i < cfg_.mlp_hidden.size(); ++i) {
        mlp_.push_back(dense(store, "score.mlp" + std::to_string(i + 1), in, cfg_.mlp_hidden[i], init_rng));
        in = cfg_.mlp_hidden[i];
    }
    mlp_.push_back(dense(store, "score.mlp_out", in, 1, init_rng));
}

Tensor ScoringHead::score_rows(const Tensor& rows, const Tensor& h_q) const {
    if (rows.rank() != 2 || rows.shape()[1] != cfg_.visual_dim)
        throw ShapeError("score_rows expects [N," + std::to_string(cfg_.visual_dim) + "], got " + to_string(rows.shape()));
    if (h_q.numel() != cfg_.query_dim)
        throw ShapeError("score_rows: query has " + std::to_string(h_q.numel()) + " entries, expected " +
                         std::to_string(cfg_.query_dim));
    Tensor v = linear(relu(linear(rows, v1_.w, v1_.b)), v2_.w, v2_.b);
    Tensor q = linear(relu(linear(reshape(h_q, {1, cfg_.query_dim}), q1_.w, q1_.b)), q2_.w, q2_.b);
    Tensor x = fuse(v, q);
    for (std::size_t i = 0; i + 1 < mlp_.size(); ++i) x = relu(linear(x, mlp_[i].w, mlp_[i].b));
    x = linear(x, mlp_.back().w, mlp_.back().b);
    return sigmoid(reshape(x, {rows.shape()[0]}));
}

ShotScores ScoringHead::score_shots(const LearnedShotFeatures& features, const Tensor& h_q) const {
    const Tensor& c_l = features.c_l;
    if (c_l.rank() != 3 || features.mask.size() != c_l.shape()[0] * c_l.shape()[1])
        throw ShapeError("score_shots: mask does not match features " + to_string(c_l.shape()));
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < features.mask.size(); ++i)
        if (features.mask[i]) valid.push_back(i);
    if (valid.empty()) throw ContractError("score_shots: no valid shot");
    Tensor rows = index_select(reshape(c_l, {c_l.shape()[0] * c_l.shape()[1], c_l.shape()[2]}), valid);
    return {score_rows(rows, h_q)};
}

Tensor bce_loss(const ShotScores& scores, std::span<const real> labels, real eps) {
    if (scores.size() == 0) throw ContractError("bce_loss: no valid shots");
    if (labels.size() != scores.size())
        throw ShapeError("bce_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(scores.size()) +
                         " scores");
    return binary_cross_entropy(scores.probs, labels, eps);
}

Summary select_summary(std::span<const real> scores, real ratio) {
    if (scores.empty()) throw ContractError("select_summary: no shots");
    const auto n = scores.size();
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ratio * static_cast<real>(n))));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(std::min(k, n));
    std::sort(order.begin(), order.end());
    Summary s;
    s.ratio = ratio;
    s.indices = order;
    for (auto i : order) s.scores.push_back(scores[i]);
    return s;
}

void write_summary_file(const std::filesystem::path& path, std::span<const real> scores, const Summary& summary) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    std::vector<std::uint8_t> selected(scores.size(), 0);
    for (auto i : summary.indices) {
        if (i >= scores.size()) throw ContractError("summary selects shot " + std::to_string(i) + " beyond the video");
        selected[i] = 1;
    }
    os << "shot_index,score,selected\n";
    for (std::size_t i = 0; i < scores.size(); ++i) os << i << ',' << format_real(scores[i]) << ',' << int(selected[i]) << '\n';
}

SummaryFile read_summary_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "shot_index,score,selected")
        throw FormatError(path.string() + ":1: expected header shot_index,score,selected");
    SummaryFile out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        std::stringstream ss(line);
        std::string idx, score, sel;
        if (!std::getline(ss, idx, ',') || !std::getline(ss, score, ',') || !std::getline(ss, sel) )
            throw FormatError(where + ": expected three comma separated fields");
        try {
            if (parse_size("shot_index", idx) != out.scores.size())
                throw FormatError(where + ": shot indices must be 0,1,2,... in order");
            out.scores.push_back(parse_real("score", score));
            if (sel != "0" && sel != "1") throw FormatError(where + ": selected must be 0 or 1");
        } catch (const ConfigError& e) {
            throw FormatError(where + ": " + e.what());
        }
        if (sel == "1") {
            out.summary.indices.push_back(out.scores.size() - 1);
            out.summary.scores.push_back(out.scores.back());
        }
    }
    if (out.scores.empty()) throw FormatError(path.string() + ": no shots");
    return out;
}

}  // namespace qfvs
