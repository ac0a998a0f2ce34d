#pragma once

// Full network: backbone followed by the scoring head, sharing one parameter
// store, plus the segmentation caps that shape its input.

#include <filesystem>
#include <memory>

#include "qfvs/backbone.hpp"
#include "qfvs/scoring.hpp"
#include "qfvs/segmentation.hpp"

namespace qfvs {

struct ModelConfig {
    BackboneConfig backbone;
    ScoringConfig scoring;
    SegmentationConfig segmentation;

    // Derives the coupled fields (scoring dims, segment cap) from the backbone.
    void link();
    void validate() const;

    static ModelConfig paper_default();
    static ModelConfig test_scale();
    // Wider than test_scale, one pooling stage; for 64-d synthetic bundles.
    static ModelConfig desk_scale();
};

KeyValues to_key_values(const ModelConfig& cfg);
// Throws ConfigError on keys that belong to no section.
void apply_key_values(ModelConfig& cfg, KeyValues kv);

class QfvsModel {
   public:
    QfvsModel(const ModelConfig& cfg, std::uint64_t init_seed);
    QfvsModel(const QfvsModel&) = delete;
    QfvsModel& operator=(const QfvsModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }
    Backbone& backbone() { return backbone_; }
    const ScoringHead& head() const { return head_; }

    SegmentedVideo prepare(const ShotSequence& shots) const;
    ShotScores forward(const SegmentedVideo& video, const Tensor& h_q, Mode mode, Rng& rng);

    // Weights file plus a <path>.cfg sidecar with the model config.
    void save(const std::filesystem::path& path) const;
    static std::unique_ptr<QfvsModel> load(const std::filesystem::path& path);

   private:
    ModelConfig cfg_;
    ParameterStore store_;
    Rng init_rng_;
    Backbone backbone_;
    ScoringHead head_;
};

}  // namespace qfvs
