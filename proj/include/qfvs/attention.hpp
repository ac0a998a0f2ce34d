#pragma once

// Single-head scaled dot-product attention and the three attention stages
// placed between the temporal encoder and decoder: local self-attention over
// the shots of each segment, query-guided segment attention, and global
// attention of every shot over all segment-level features.
//
// Masks are flat byte vectors, 1 = valid, laid out like the leading dims of
// the tensor they gate. Reductions over the key axis are evaluated in a
// canonical (sorted) order, so permuting keys leaves every output bit
// unchanged.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qfvs/module.hpp"
#include "qfvs/tensor.hpp"

namespace qfvs::attention {

using Mask = std::vector<std::uint8_t>;

struct AttentionParams {
    Tensor w_q;  // [query_in, head]
    Tensor w_k;  // [key_in, head]
    Tensor w_v;  // [key_in, head]

    std::size_t head_dim() const { return w_q.shape()[1]; }

    static AttentionParams create(ParameterStore& store, const std::string& prefix, std::size_t query_in,
                                  std::size_t key_in, std::size_t head, Rng& rng);
};

// logits [B,Lq,Lk] -> weights; masked keys get exactly 0. `key_mask` is B*Lk
// bytes or empty (all valid). Throws ContractError if a row has no valid key.
Tensor masked_softmax(const Tensor& logits, std::span<const std::uint8_t> key_mask);

// weights [B,Lq,Lk] x values [B,Lk,D] with order-independent summation.
Tensor attend(const Tensor& weights, const Tensor& values);

struct AttentionOutput {
    Tensor output;   // [B,Lq,Dv]
    Tensor weights;  // [B,Lq,Lk]
};

// softmax(q k^T / sqrt(d)) v; q [B,Lq,d], k [B,Lk,d], v [B,Lk,Dv]. A q with
// batch 1 is shared across all B.
AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::span<const std::uint8_t> key_mask = {});

// c_v [S,R,Cv], mask S*R -> c_s [S,R,head].
Tensor local_self_attention(const Tensor& c_v, const AttentionParams& params, std::span<const std::uint8_t> mask);

struct QueryGuidedOutput {
    Tensor c_q;           // [S,R,head] per-shot contributions
    Tensor c_sq;          // [S,head] masked mean of c_q over valid shots
    Tensor weights;       // [S,1,R]
    Mask segment_valid;   // 0 for segments without a valid shot (c_sq row is 0)
};

// h_q [E] attends over each segment's shots. Per-shot feature is
// n_valid * w_i * v_i, so the masked mean equals the attention output.
QueryGuidedOutput query_guided_segment_attention(const Tensor& c_v, const Tensor& h_q, const AttentionParams& params,
                                                 std::span<const std::uint8_t> mask);

// Every shot of c_v [S,R,Cv] attends over the valid rows of c_sq [S,head].
Tensor global_attention(const Tensor& c_v, const Tensor& c_sq, const AttentionParams& params,
                        std::span<const std::uint8_t> segment_mask);

// [c_v ; c_s ; c_g] along channels.
Tensor concat_features(const Tensor& c_v, const Tensor& c_s, const Tensor& c_g);

struct FeatureMaps {
    Tensor c_v, c_s, c_q, c_sq, c_g, c_c;
    Mask mask;           // S*R
    Mask segment_valid;  // S
};

}  // namespace qfvs::attention
