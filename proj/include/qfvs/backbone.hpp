#pragma once

// Feature-learning network: eight temporal convolution blocks reduce each
// segment from T to R slots, the three attention stages mix in local,
// query-guided and global context, and a two-layer transposed-convolution
// block restores T slots with C^l channels per shot.

#include <string>
#include <vector>

#include "qfvs/attention.hpp"
#include "qfvs/config.hpp"
#include "qfvs/module.hpp"
#include "qfvs/segmentation.hpp"

namespace qfvs {

struct BackboneConfig {
    std::size_t input_dim = 2048;    // C
    std::size_t segment_len = 200;   // T
    std::vector<std::size_t> block_channels{64, 128, 256, 512, 512};
    std::vector<std::size_t> block_layers{2, 2, 3, 3, 3};
    std::vector<std::size_t> pool_strides{2, 2, 5, 1, 1};
    std::size_t fc_channels = 512;   // blocks 6 and 7
    std::size_t feature_dim = 256;   // block 8 output, Cv
    std::size_t head_dim = 256;      // d_k of all three attentions
    std::size_t query_dim = 300;     // concept embedding width
    std::vector<std::size_t> deconv_strides{5, 4};
    std::vector<std::size_t> deconv_channels{512, 1024};  // last entry is C^l
    std::size_t conv_kernel = 3;
    real dropout = 0.3;

    std::size_t reduction() const;
    std::size_t reduced_len() const { return segment_len / reduction(); }
    std::size_t concat_dim() const { return feature_dim + 2 * head_dim; }
    std::size_t output_dim() const { return deconv_channels.back(); }
    // Throws ConfigError if the strides cannot map T -> R -> T exactly.
    void validate() const;

    static BackboneConfig paper_default();
    // T=40, pools [2,2,2,1,1] (R=5), deconv [4,2], narrow channels.
    static BackboneConfig test_scale();
};

struct LearnedShotFeatures {
    Tensor c_l;                      // [S,T,C^l]
    std::vector<std::uint8_t> mask;  // S*T
};

class Backbone {
   public:
    Backbone(const BackboneConfig& cfg, ParameterStore& store, Rng& init_rng);

    const BackboneConfig& config() const { return cfg_; }

    // [S,T,C] padded features -> c_v [S,R,Cv].
    Tensor encode(const SegmentedVideo& video, Mode mode, Rng& rng);
    // Slot r of the reduced axis is valid if any of its source shots is.
    std::vector<std::uint8_t> reduced_mask(const SegmentedVideo& video) const;
    attention::FeatureMaps attend(const Tensor& c_v, const std::vector<std::uint8_t>& reduced_mask,
                                  const Tensor& h_q) const;
    LearnedShotFeatures decode(const Tensor& c_c, std::vector<std::uint8_t> mask) const;

    LearnedShotFeatures forward(const SegmentedVideo& video, const Tensor& h_q, Mode mode, Rng& rng);

   private:
    struct ConvLayer {
        Tensor weight, bias, gamma, beta;
        BatchNormState* bn = nullptr;
    };

    BackboneConfig cfg_;
    std::vector<std::vector<ConvLayer>> blocks_;  // 8 blocks
    attention::AttentionParams lsa_, qgsa_, ga_;
    std::vector<Tensor> deconv_;
};

KeyValues to_key_values(const BackboneConfig& cfg);
// Unknown keys are left for the caller; recognised ones are consumed.
void apply_key_values(BackboneConfig& cfg, KeyValues& kv);

}  // namespace qfvs
