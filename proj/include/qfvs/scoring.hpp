#pragma once

// Shot scoring head: visual and query projections into a shared space, the
// fusion unit, an MLP with sigmoid output, the BCE objective, and top-ratio
// chronological summary selection.

#include <filesystem>
#include <span>
#include <vector>

#include "qfvs/backbone.hpp"
#include "qfvs/config.hpp"
#include "qfvs/module.hpp"

namespace qfvs {

struct ScoringConfig {
    std::size_t visual_dim = 1024;  // C^l
    std::size_t visual_hidden = 512;
    std::size_t query_dim = 300;
    std::size_t query_hidden = 300;
    std::size_t joint_dim = 300;
    std::vector<std::size_t> mlp_hidden{256, 64};
    real summary_ratio = 0.02;
    real clamp_eps = 1e-7;

    std::size_t fused_dim() const { return 4 * joint_dim; }
    void validate() const;
};

KeyValues to_key_values(const ScoringConfig& cfg);
void apply_key_values(ScoringConfig& cfg, KeyValues& kv);

// [v+q ; v*q ; v ; q] for every row of v [N,P]; q [P] is shared.
Tensor fuse(const Tensor& v, const Tensor& q);

// Probabilities of the valid shots, ordered by original shot index.
struct ShotScores {
    Tensor probs;  // [N]

    std::size_t size() const { return probs.numel(); }
    std::vector<real> values() const { return {probs.data().begin(), probs.data().end()}; }
};

class ScoringHead {
   public:
    ScoringHead(const ScoringConfig& cfg, ParameterStore& store, Rng& init_rng);

    const ScoringConfig& config() const { return cfg_; }

    // rows [N, visual_dim], h_q [query_dim] -> [N] in (0, 1).
    Tensor score_rows(const Tensor& rows, const Tensor& h_q) const;
    ShotScores score_shots(const LearnedShotFeatures& features, const Tensor& h_q) const;

   private:
    struct Dense {
        Tensor w, b;
    };
    Dense dense(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

    ScoringConfig cfg_;
    Dense v1_, v2_, q1_, q2_;
    std::vector<Dense> mlp_;
};

// Mean of -(y log g + (1-y) log(1-g)) over valid shots, g clamped to
// [eps, 1-eps]. Throws ContractError when there are no shots.
Tensor bce_loss(const ShotScores& scores, std::span<const real> labels, real eps = 1e-7);

struct Summary {
    std::vector<std::size_t> indices;  // ascending
    std::vector<real> scores;          // of the selected shots
    real ratio = 0.02;
};

// k = max(1, floor(ratio * n)) highest scores, ties to the earlier shot,
// returned in chronological order.
Summary select_summary(std::span<const real> scores, real ratio = 0.02);

// "shot_index,score,selected" with a header line, one row per shot.
void write_summary_file(const std::filesystem::path& path, std::span<const real> scores, const Summary& summary);

struct SummaryFile {
    std::vector<real> scores;
    Summary summary;
};
SummaryFile read_summary_file(const std::filesystem::path& path);

}  // namespace qfvs
