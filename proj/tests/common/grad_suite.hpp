#pragma once

// Finite-difference checks for every differentiable op and for the full
// network at test scale.

#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "qfvs/attention.hpp"
#include "qfvs/model.hpp"
#include "qfvs/scoring.hpp"

namespace qfvs::testing {

struct GradCase {
    std::string name;
    bool composite = false;
    GradCheck result;
    bool passed() const { return result.max_rel_err < (composite ? tol::grad_composite : tol::grad_op); }
};

inline std::vector<GradCase> op_gradient_cases() {
    using V = std::vector<Tensor>;
    std::vector<GradCase> out;
    Rng rng(2024);
    auto op = [&](std::string name, auto f, V inputs) {
        out.push_back({std::move(name), false, check_gradients([&](const V& in) { return project(f(in)); }, inputs)});
    };

    op("matmul", [](const V& in) { return matmul(in[0], in[1]); },
       {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 5}, rng)});
    op("matmul_broadcast", [](const V& in) { return matmul(in[0], in[1]); },
       {random_tensor({1, 3, 4}, rng), random_tensor({2, 4, 2}, rng)});
    op("linear", [](const V& in) { return linear(in[0], in[1], in[2]); },
       {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng)});
    op("conv1d", [](const V& in) { return conv1d(in[0], in[1], in[2], 1, 1); },
       {random_tensor({2, 3, 7}, rng), random_tensor({4, 3, 3}, rng), random_tensor({4}, rng)});
    op("conv1d_strided", [](const V& in) { return conv1d(in[0], in[1], Tensor{}, 2, 0); },
       {random_tensor({1, 2, 9}, rng), random_tensor({3, 2, 3}, rng)});
    op("conv1d_transpose", [](const V& in) { return conv1d_transpose(in[0], in[1], 2); },
       {random_tensor({2, 3, 4}, rng), random_tensor({3, 2, 2}, rng)});
    op("maxpool1d", [](const V& in) { return maxpool1d(in[0], 2, 2); }, {random_tensor({2, 3, 8}, rng)});
    op("batchnorm1d_train",
       [](const V& in) {
           BatchNormState st(3);
           return batchnorm1d(in[0], in[1], in[2], st, Mode::train);
       },
       {random_tensor({2, 3, 5}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)});
    op("batchnorm1d_eval",
       [](const V& in) {
           BatchNormState st(3);
           st.running_mean = {0.1, -0.2, 0.3};
           st.running_var = {0.5, 1.5, 2.0};
           return batchnorm1d(in[0], in[1], in[2], st, Mode::eval);
       },
       {random_tensor({2, 3, 5}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)});
    op("relu", [](const V& in) { return relu(in[0]); }, {random_tensor({4, 5}, rng)});
    op("sigmoid", [](const V& in) { return sigmoid(in[0]); }, {random_tensor({4, 5}, rng, -3, 3)});
    op("softmax_last", [](const V& in) { return softmax(in[0], -1); }, {random_tensor({3, 5}, rng, -2, 2)});
    op("softmax_first", [](const V& in) { return softmax(in[0], 0); }, {random_tensor({3, 5}, rng, -2, 2)});
    op("add", [](const V& in) { return add(in[0], in[1]); }, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    op("add_scalar", [](const V& in) { return add(in[0], in[1]); }, {random_tensor({3, 4}, rng), random_tensor({1}, rng)});
    op("sub", [](const V& in) { return sub(in[0], in[1]); }, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    op("mul", [](const V& in) { return mul(in[0], in[1]); }, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    op("scale", [](const V& in) { return scale(in[0], -1.7); }, {random_tensor({3, 4}, rng)});
    op("dropout_train",
       [](const V& in) {
           Rng r(11);
           return dropout(in[0], 0.3, r, Mode::train);
       },
       {random_tensor({4, 6}, rng)});
    op("concat", [](const V& in) { return concat({in[0], in[1]}, 1); },
       {random_tensor({2, 3, 2}, rng), random_tensor({2, 1, 2}, rng)});
    op("mean", [](const V& in) { return mean(in[0], 1); }, {random_tensor({2, 3, 4}, rng)});
    op("sum", [](const V& in) { return sum(in[0]); }, {random_tensor({2, 3}, rng)});
    op("reshape", [](const V& in) { return reshape(in[0], {3, 4}); }, {random_tensor({2, 6}, rng)});
    op("transpose", [](const V& in) { return transpose(in[0], 0, 2); }, {random_tensor({2, 3, 4}, rng)});
    op("slice", [](const V& in) { return slice(in[0], 1, 1, 3); }, {random_tensor({2, 4, 3}, rng)});
    op("index_select",
       [](const V& in) {
           const std::vector<std::size_t> rows{2, 0, 2};
           return index_select(in[0], rows);
       },
       {random_tensor({3, 4}, rng)});
    op("scale_rows", [](const V& in) { return scale_rows(in[0], in[1]); },
       {random_tensor({2, 3, 4}, rng), random_tensor({2, 3}, rng)});
    op("add_bias", [](const V& in) { return add_bias(in[0], in[1]); },
       {random_tensor({2, 3, 4}, rng), random_tensor({4}, rng)});
    {
        const std::vector<real> labels{1, 0, 1, 1, 0};
        out.push_back({"binary_cross_entropy", false,
                       check_gradients([&](const V& in) { return binary_cross_entropy(in[0], labels); },
                                       {random_tensor({5}, rng, 0.05, 0.95)})});
    }
    const attention::Mask key_mask{1, 0, 1, 1, 1, 1, 0, 1};
    op("masked_softmax", [&](const V& in) { return attention::masked_softmax(in[0], key_mask); },
       {random_tensor({2, 3, 4}, rng, -2, 2)});
    op("scaled_dot_attention",
       [&](const V& in) { return attention::scaled_dot_attention(in[0], in[1], in[2], key_mask).output; },
       {random_tensor({2, 3, 5}, rng), random_tensor({2, 4, 5}, rng), random_tensor({2, 4, 3}, rng)});
    const attention::Mask shot_mask{1, 1, 1, 0, 1, 1, 0, 0, 1};
    op("local_self_attention",
       [&](const V& in) { return attention::local_self_attention(in[0], {in[1], in[2], in[3]}, shot_mask); },
       {random_tensor({3, 3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({4, 5}, rng),
        random_tensor({4, 5}, rng)});
    op("query_guided_segment_attention",
       [&](const V& in) {
           auto r = attention::query_guided_segment_attention(in[0], in[1], {in[2], in[3], in[4]}, shot_mask);
           return concat({reshape(r.c_q, {r.c_q.numel()}), reshape(r.c_sq, {r.c_sq.numel()})}, 0);
       },
       {random_tensor({3, 3, 4}, rng), random_tensor({6}, rng), random_tensor({6, 5}, rng), random_tensor({4, 5}, rng),
        random_tensor({4, 5}, rng)});
    const attention::Mask seg_mask{1, 0, 1};
    op("global_attention",
       [&](const V& in) { return attention::global_attention(in[0], in[1], {in[2], in[3], in[4]}, seg_mask); },
       {random_tensor({3, 2, 4}, rng), random_tensor({3, 5}, rng), random_tensor({4, 5}, rng),
        random_tensor({5, 5}, rng), random_tensor({5, 5}, rng)});
    op("concat_features", [](const V& in) { return attention::concat_features(in[0], in[1], in[2]); },
       {random_tensor({2, 3, 2}, rng), random_tensor({2, 3, 3}, rng), random_tensor({2, 3, 1}, rng)});
    op("fuse", [](const V& in) { return fuse(in[0], in[1]); }, {random_tensor({3, 4}, rng), random_tensor({4}, rng)});
    return out;
}

// Three KTS-style segments padded to T = 40 slots.
inline SegmentedVideo composite_video(std::size_t dim, Rng& rng) {
    ShotSequence shots;
    shots.video_id = "grad";
    shots.feature_dim = dim;
    const std::size_t n = 40 + 33 + 27;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) shots.features.push_back(rng.uniform(-1, 1));
        shots.tags.emplace_back();
    }
    return build_segmented(shots, SegmentBoundaries::from_change_points(n, {40, 73}), 40);
}

// Full network (backbone, attention, decoder, scoring head, loss) at test
// scale, S = 3 and T = 40, in train mode. Checks the shot features and a
// spread of entries of every parameter.
inline GradCase composite_gradient_case(std::size_t entries_per_input = 16) {
    ModelConfig cfg = ModelConfig::test_scale();
    QfvsModel model(cfg, 5);
    Rng rng(77);
    SegmentedVideo video = composite_video(cfg.backbone.input_dim, rng);
    std::vector<real> feat(video.features.data().begin(), video.features.data().end());
    const Tensor features = Tensor::from_data(video.features.shape(), feat, true);
    const Tensor h_q = random_tensor({cfg.backbone.query_dim}, rng, -0.2, 0.2, false);
    std::vector<real> labels;
    for (std::size_t i = 0; i < video.valid_count(); ++i) labels.push_back(rng.bernoulli(0.4) ? 1 : 0);

    std::vector<Tensor> inputs{features};
    for (const auto& p : model.store().parameters()) inputs.push_back(p.tensor);
    auto f = [&](const std::vector<Tensor>& in) {
        SegmentedVideo v = video;
        v.features = in[0];
        Rng drop(3);
        return bce_loss(model.forward(v, h_q, Mode::train, drop), labels);
    };
    // A small step keeps ReLU and max-pool kinks out of the stencil.
    return {"fcsna_composite", true, check_gradients(f, inputs, entries_per_input, 1e-6)};
}

}  // namespace qfvs::testing
