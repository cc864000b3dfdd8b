// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Miniature prompted vision transformer and text encoder projecting into a
// shared joint space. The vision side carries learnable prompt tokens at
// every layer; per layer, prompt outputs are discarded and fresh prompts
// injected, so blocks always emit [class, patches].

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tpl/graph.hpp"
#include "tpl/params.hpp"
#include "tpl/tensor.hpp"

namespace tpl {

struct ModelConfig {
    std::size_t image_size = 32;
    std::size_t channels = 3;
    std::size_t patch_size = 8;
    std::size_t d_e = 64;             // encoder width
    std::size_t vision_layers = 4;    // K
    std::size_t heads = 4;
    std::size_t text_layers = 2;
    std::size_t context = 8;          // positional table length (text)
    std::size_t d_j = 64;             // joint feature dimension
    std::size_t prompt_len = 4;       // L_p vision prompt tokens per layer
    std::size_t text_prompt_len = 2;  // L_v generated text prompt tokens
    std::size_t classes = 8;          // C
    std::size_t gen_hidden = 128;     // generator MLP width
    double tau = 0.07;

    static constexpr std::size_t kTemplateLen = 4;  // "a photo of a"

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t num_patches() const { return grid() * grid(); }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }
    std::size_t vocab_size() const { return kTemplateLen + classes; }
    std::size_t descriptor_len() const { return kTemplateLen + 1; }

    void validate() const;
};

// Token ids for "a photo of a [CLASS]"; class_id is the 1-based class label.
struct ClassDescriptor {
    std::vector<std::size_t> token_ids;
    std::size_t class_id = 0;
};

ClassDescriptor make_class_descriptor(const ModelConfig& cfg, std::size_t class_id);
std::vector<ClassDescriptor> make_class_descriptors(const ModelConfig& cfg);

// Flatten a {H, W, C} image into a {num_patches, patch_dim} matrix, patches
// in row-major grid order, pixels row-major within a patch.
Tensor patchify(const ModelConfig& cfg, const Tensor& image);

struct TransformerBlock {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
};

struct PromptedVisionEncoder {
    Tensor patch_w, patch_b;
    Tensor class_token;               // 1 x d_e
    std::vector<TransformerBlock> blocks;
    std::vector<Tensor> prompts;      // K tensors, each L_p x d_e
    Tensor projection;                // d_e x d_j
};

struct TextEncoder {
    Tensor vocab_embed;               // vocab x d_e
    Tensor pos_embed;                 // context x d_e
    std::vector<TransformerBlock> blocks;
    Tensor projection;                // d_e x d_j
};

// The dual encoder. Stage 1 trains backbone-role parameters with prompts
// unused; stage 2 freezes the backbone and trains prompt-role parameters.
struct DualEncoder {
    ModelConfig cfg;
    PromptedVisionEncoder vision;
    TextEncoder text;

    static DualEncoder init(const ModelConfig& cfg, std::uint64_t seed);

    // Stable enumeration order; names are unique, roles are
    // "backbone" or "prompt".
    std::vector<ParamRef> params();

    Bound bind(Graph& g) { return bind_params(g, params()); }

    // I = L2normalize(projection(class token after K blocks)); 1 x d_j.
    // with_prompts = false reproduces the plain (stage-1) encoder.
    NodeId encode_image(Graph& g, const Bound& b, const Tensor& image,
                        bool with_prompts) const;

    // T (no v^m) or T-bar (v^m tokens prepended); 1 x d_j, L2-normalized.
    // v^m must be an L_v x d_e node in the same graph.
    NodeId encode_text(Graph& g, const Bound& b, const ClassDescriptor& desc,
                       std::optional<NodeId> vm = std::nullopt) const;
};

}  // namespace tpl
