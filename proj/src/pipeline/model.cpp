#include "qfvs/model.hpp"

namespace qfvs {

void ModelConfig::link() {
    scoring.visual_dim = backbone.output_dim();
    scoring.query_dim = backbone.query_dim;
    segmentation.max_shots = backbone.segment_len;
}

void ModelConfig::validate() const {
    backbone.validate();
    scoring.validate();
    if (scoring.visual_dim != backbone.output_dim() || scoring.query_dim != backbone.query_dim)
        throw ConfigError("scoring dims do not match the backbone output");
    if (segmentation.max_shots != backbone.segment_len)
        throw ConfigError("segmentation.max_shots must equal backbone.segment_len");
    if (segmentation.max_segments == 0) throw ConfigError("segmentation.max_segments must be positive");
    if (!(segmentation.penalty >= 0)) throw ConfigError("segmentation.penalty must be non-negative");
}

ModelConfig ModelConfig::paper_default() {
    ModelConfig c;
    c.link();
    return c;
}

ModelConfig ModelConfig::test_scale() {
    ModelConfig c;
    c.backbone = BackboneConfig::test_scale();
    c.scoring.visual_hidden = 32;
    c.scoring.query_hidden = 32;
    c.scoring.joint_dim = 16;
    c.scoring.mlp_hidden = {16, 8};
    c.link();
    return c;
}

ModelConfig ModelConfig::desk_scale() {
    ModelConfig c;
    c.backbone = BackboneConfig::test_scale();
    c.backbone.block_channels = {16, 32, 64, 64, 64};
    c.backbone.pool_strides = {2, 1, 1, 1, 1};
    c.backbone.fc_channels = 64;
    c.backbone.feature_dim = 64;
    c.backbone.head_dim = 64;
    c.backbone.deconv_strides = {2, 1};
    c.backbone.deconv_channels = {64, 128};
    c.scoring.visual_hidden = 128;
    c.scoring.query_hidden = 64;
    c.scoring.joint_dim = 64;
    c.scoring.mlp_hidden = {64, 16};
    c.link();
    return c;
}

KeyValues to_key_values(const ModelConfig& c) {
    KeyValues kv = to_key_values(c.backbone);
    kv.merge(to_key_values(c.scoring));
    kv["segmentation.max_segments"] = std::to_string(c.segmentation.max_segments);
    kv["segmentation.max_shots"] = std::to_string(c.segmentation.max_shots);
    kv["segmentation.penalty"] = format_real(c.segmentation.penalty);
    return kv;
}

void apply_key_values(ModelConfig& c, KeyValues kv) {
    apply_key_values(c.backbone, kv);
    apply_key_values(c.scoring, kv);
    if (auto it = kv.find("segmentation.max_segments"); it != kv.end()) {
        c.segmentation.max_segments = parse_size(it->first, it->second);
        kv.erase(it);
    }
    if (auto it = kv.find("segmentation.max_shots"); it != kv.end()) {
        c.segmentation.max_shots = parse_size(it->first, it->second);
        kv.erase(it);
    }
    if (auto it = kv.find("segmentation.penalty"); it != kv.end()) {
        c.segmentation.penalty = parse_real(it->first, it->second);
        kv.erase(it);
    }
    if (!kv.empty()) throw ConfigError("unknown config key " + kv.begin()->first);
}

QfvsModel::QfvsModel(const ModelConfig& cfg, std::uint64_t init_seed)
    : cfg_((cfg.validate(), cfg)),
      init_rng_(init_seed),
      backbone_(cfg_.backbone, store_, init_rng_),
      head_(cfg_.scoring, store_, init_rng_) {}

SegmentedVideo QfvsModel::prepare(const ShotSequence& shots) const {
    if (shots.feature_dim != cfg_.backbone.input_dim)
        throw ConfigError("video " + shots.video_id + " has " + std::to_string(shots.feature_dim) +
                          "-d features, model expects " + std::to_string(cfg_.backbone.input_dim));
    return build_segmented(shots, kts_segment(shots, cfg_.segmentation), cfg_.backbone.segment_len);
}

ShotScores QfvsModel::forward(const SegmentedVideo& video, const Tensor& h_q, Mode mode, Rng& rng) {
    return head_.score_shots(backbone_.forward(video, h_q, mode, rng), h_q);
}

void QfvsModel::save(const std::filesystem::path& path) const {
    save_checkpoint(path, store_.export_arrays());
    auto sidecar = path;
    sidecar += ".cfg";
    write_key_values(sidecar, to_key_values(cfg_));
}

std::unique_ptr<QfvsModel> QfvsModel::load(const std::filesystem::path& path) {
    auto sidecar = path;
    sidecar += ".cfg";
    ModelConfig cfg;
    apply_key_values(cfg, read_key_values(sidecar));
    auto model = std::make_unique<QfvsModel>(cfg, 0);
    model->store_.import_arrays(load_checkpoint(path));
    return model;
}

}  // namespace qfvs
