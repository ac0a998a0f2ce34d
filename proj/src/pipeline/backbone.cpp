#include "qfvs/backbone.hpp"

#include <functional>
#include <numeric>

namespace qfvs {

namespace {

std::size_t product(const std::vector<std::size_t>& v) {
    return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::size_t BackboneConfig::reduction() const { return product(pool_strides); }

void BackboneConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("backbone config: " + msg); };
    if (block_channels.size() != 5 || block_layers.size() != 5 || pool_strides.size() != 5)
        fail("blocks 1-5 need exactly five channel widths, layer counts and pool strides");
    for (std::size_t i = 0; i < 5; ++i) {
        if (block_channels[i] == 0 || block_layers[i] == 0) fail("block widths and layer counts must be positive");
        if (pool_strides[i] == 0) fail("pool strides must be positive");
    }
    if (input_dim == 0 || fc_channels == 0 || feature_dim == 0 || head_dim == 0 || query_dim == 0)
        fail("dimensions must be positive");
    if (conv_kernel == 0 || conv_kernel % 2 == 0) fail("conv_kernel must be odd so padding keeps length");
    if (segment_len == 0 || segment_len % reduction() != 0)
        fail("segment_len " + std::to_string(segment_len) + " is not divisible by the pool product " +
             std::to_string(reduction()));
    if (deconv_strides.empty() || deconv_strides.size() != deconv_channels.size())
        fail("deconv strides and channels must be non-empty and of equal length");
    for (std::size_t i = 0; i < deconv_strides.size(); ++i)
        if (deconv_strides[i] == 0 || deconv_channels[i] == 0) fail("deconv strides and channels must be positive");
    if (product(deconv_strides) != reduction())
        fail("deconv strides restore x" + std::to_string(product(deconv_strides)) + " but pools reduce x" +
             std::to_string(reduction()));
    if (!(dropout >= 0 && dropout < 1)) fail("dropout must lie in [0, 1)");
}

BackboneConfig BackboneConfig::paper_default() { return {}; }

BackboneConfig BackboneConfig::test_scale() {
    BackboneConfig c;
    c.input_dim = 64;
    c.segment_len = 40;
    c.block_channels = {8, 8, 16, 16, 16};
    c.pool_strides = {2, 2, 2, 1, 1};
    c.fc_channels = 16;
    c.feature_dim = 16;
    c.head_dim = 16;
    c.query_dim = 300;
    c.deconv_strides = {4, 2};
    c.deconv_channels = {16, 32};
    return c;
}

Backbone::Backbone(const BackboneConfig& cfg, ParameterStore& store, Rng& init_rng) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t k = cfg_.conv_kernel;
    auto conv_layer = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, bool bn) {
        ConvLayer l;
        l.weight = store.add(name + ".weight", kaiming_uniform({out, in, kernel}, in * kernel, init_rng));
        l.bias = store.add(name + ".bias", Tensor::zeros({out}, true));
        if (bn) {
            l.gamma = store.add(name + ".bn.gamma", Tensor::full({out}, 1, true));
            l.beta = store.add(name + ".bn.beta", Tensor::zeros({out}, true));
            l.bn = &store.add_batchnorm(name + ".bn", out);
        }
        return l;
    };

    std::size_t in = cfg_.input_dim;
    for (std::size_t b = 0; b < 5; ++b) {
        std::vector<ConvLayer> layers;
        for (std::size_t i = 0; i < cfg_.block_layers[b]; ++i) {
            const std::string name = "block" + std::to_string(b + 1) + ".conv" + std::to_string(i + 1);
            layers.push_back(conv_layer(name, in, cfg_.block_channels[b], k, true));
            in = cfg_.block_channels[b];
        }
        blocks_.push_back(std::move(layers));
    }
    for (std::size_t b = 6; b <= 7; ++b) {
        blocks_.push_back({conv_layer("block" + std::to_string(b) + ".conv1", in, cfg_.fc_channels, k, false)});
        in = cfg_.fc_channels;
    }
    blocks_.push_back({conv_layer("block8.conv1", in, cfg_.feature_dim, 1, true)});

    const std::size_t cv = cfg_.feature_dim, head = cfg_.head_dim;
    lsa_ = attention::AttentionParams::create(store, "lsa", cv, cv, head, init_rng);
    qgsa_ = attention::AttentionParams::create(store, "qgsa", cfg_.query_dim, cv, head, init_rng);
    ga_ = attention::AttentionParams::create(store, "ga", cv, head, head, init_rng);

    in = cfg_.concat_dim();
    for (std::size_t i = 0; i < cfg_.deconv_strides.size(); ++i) {
        const std::size_t s = cfg_.deconv_strides[i], out = cfg_.deconv_channels[i];
        deconv_.push_back(store.add("deconv" + std::to_string(i + 1) + ".weight",
                                    kaiming_uniform({in, out, s}, in * s, init_rng)));
        in = out;
    }
}

Tensor Backbone::encode(const SegmentedVideo& video, Mode mode, Rng& rng) {
    if (video.slots() != cfg_.segment_len || video.dim() != cfg_.input_dim)
        throw ConfigError("backbone expects segments of " + std::to_string(cfg_.segment_len) + " x " +
                          std::to_string(cfg_.input_dim) + ", got " + to_string(video.features.shape()));
    const std::size_t segs = video.segments(), slots = video.slots();
    std::vector<real> m(video.mask.begin(), video.mask.end());
    Tensor x = scale_rows(video.features, Tensor::from_data({segs, slots}, std::move(m)));
    x = transpose(x, 1, 2);  // [S,C,T]

    const std::size_t pad = cfg_.conv_kernel / 2;
    for (std::size_t b = 0; b < 5; ++b) {
        for (auto& l : blocks_[b]) x = relu(batchnorm1d(conv1d(x, l.weight, l.bias, 1, pad), l.gamma, l.beta, *l.bn, mode));
        if (cfg_.pool_strides[b] > 1) x = maxpool1d(x, cfg_.pool_strides[b], cfg_.pool_strides[b]);
    }
    for (std::size_t b = 5; b < 7; ++b) {
        const auto& l = blocks_[b][0];
        x = dropout(relu(conv1d(x, l.weight, l.bias, 1, pad)), cfg_.dropout, rng, mode);
    }
    const auto& l8 = blocks_[7][0];
    x = relu(batchnorm1d(conv1d(x, l8.weight, l8.bias, 1, 0), l8.gamma, l8.beta, *l8.bn, mode));
    return transpose(x, 1, 2);  // [S,R,Cv]
}

std::vector<std::uint8_t> Backbone::reduced_mask(const SegmentedVideo& video) const {
    const std::size_t segs = video.segments(), slots = video.slots();
    const std::size_t red = cfg_.reduction(), r_len = slots / red;
    std::vector<std::uint8_t> out(segs * r_len, 0);
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t t = 0; t < slots; ++t)
            if (video.mask[s * slots + t]) out[s * r_len + t / red] = 1;
    return out;
}

attention::FeatureMaps Backbone::attend(const Tensor& c_v, const std::vector<std::uint8_t>& reduced_mask,
                                        const Tensor& h_q) const {
    if (h_q.numel() != cfg_.query_dim)
        throw ShapeError("query feature has " + std::to_string(h_q.numel()) + " entries, backbone expects " +
                         std::to_string(cfg_.query_dim));
    attention::FeatureMaps f;
    f.c_v = c_v;
    f.mask = reduced_mask;
    f.c_s = attention::local_self_attention(c_v, lsa_, reduced_mask);
    auto qg = attention::query_guided_segment_attention(c_v, h_q, qgsa_, reduced_mask);
    f.c_q = qg.c_q;
    f.c_sq = qg.c_sq;
    f.segment_valid = qg.segment_valid;
    f.c_g = attention::global_attention(c_v, f.c_sq, ga_, f.segment_valid);
    f.c_c = attention::concat_features(f.c_v, f.c_s, f.c_g);
    return f;
}

LearnedShotFeatures Backbone::decode(const Tensor& c_c, std::vector<std::uint8_t> mask) const {
    if (c_c.rank() != 3 || c_c.shape()[1] != cfg_.reduced_len() || c_c.shape()[2] != cfg_.concat_dim())
        throw ConfigError("decode expects [S," + std::to_string(cfg_.reduced_len()) + "," +
                          std::to_string(cfg_.concat_dim()) + "], got " + to_string(c_c.shape()));
    Tensor x = transpose(c_c, 1, 2);
    for (std::size_t i = 0; i < deconv_.size(); ++i) x = relu(conv1d_transpose(x, deconv_[i], cfg_.deconv_strides[i]));
    return {transpose(x, 1, 2), std::move(mask)};
}

LearnedShotFeatures Backbone::forward(const SegmentedVideo& video, const Tensor& h_q, Mode mode, Rng& rng) {
    Tensor c_v = encode(video, mode, rng);
    auto maps = attend(c_v, reduced_mask(video), h_q);
    return decode(maps.c_c, video.mask);
}

KeyValues to_key_values(const BackboneConfig& c) {
    return {
        {"backbone.input_dim", std::to_string(c.input_dim)},
        {"backbone.segment_len", std::to_string(c.segment_len)},
        {"backbone.block_channels", format_size_list(c.block_channels)},
        {"backbone.block_layers", format_size_list(c.block_layers)},
        {"backbone.pool_strides", format_size_list(c.pool_strides)},
        {"backbone.fc_channels", std::to_string(c.fc_channels)},
        {"backbone.feature_dim", std::to_string(c.feature_dim)},
        {"backbone.head_dim", std::to_string(c.head_dim)},
        {"backbone.query_dim", std::to_string(c.query_dim)},
        {"backbone.deconv_strides", format_size_list(c.deconv_strides)},
        {"backbone.deconv_channels", format_size_list(c.deconv_channels)},
        {"backbone.conv_kernel", std::to_string(c.conv_kernel)},
        {"backbone.dropout", format_real(c.dropout)},
    };
}

void apply_key_values(BackboneConfig& c, KeyValues& kv) {
    auto take = [&](const char* key, auto&& assign) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        assign(it->first, it->second);
        kv.erase(it);
    };
    auto size_field = [&](const char* key, std::size_t& f) {
        take(key, [&](const std::string& k, const std::string& v) { f = parse_size(k, v); });
    };
    auto list_field = [&](const char* key, std::vector<std::size_t>& f) {
        take(key, [&](const std::string& k, const std::string& v) { f = parse_size_list(k, v); });
    };
    size_field("backbone.input_dim", c.input_dim);
    size_field("backbone.segment_len", c.segment_len);
    list_field("backbone.block_channels", c.block_channels);
    list_field("backbone.block_layers", c.block_layers);
    list_field("backbone.pool_strides", c.pool_strides);
    size_field("backbone.fc_channels", c.fc_channels);
    size_field("backbone.feature_dim", c.feature_dim);
    size_field("backbone.head_dim", c.head_dim);
    size_field("backbone.query_dim", c.query_dim);
    list_field("backbone.deconv_strides", c.deconv_strides);
    list_field("backbone.deconv_channels", c.deconv_channels);
    size_field("backbone.conv_kernel", c.conv_kernel);
    take("backbone.dropout", [&](const std::string& k, const std::string& v) { c.dropout = parse_real(k, v); });
}

}  // namespace qfvs
