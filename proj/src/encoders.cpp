// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/encoders.hpp"

#include <cmath>

namespace tpl {

void ModelConfig::validate() const {
    if (image_size == 0 || channels == 0 || patch_size == 0 || d_e == 0 || vision_layers == 0 ||
        heads == 0 || text_layers == 0 || context == 0 || d_j == 0 || prompt_len == 0 ||
        text_prompt_len == 0 || classes < 2 || gen_hidden == 0) {
        throw UsageError("model config: all dimensions must be positive (and classes >= 2)");
    }
    if (image_size % patch_size != 0) {
        throw UsageError(strf("model config: image size ", image_size,
                              " not divisible by patch size ", patch_size));
    }
    if (d_e % heads != 0) {
        throw UsageError(strf("model config: width ", d_e, " not divisible by ", heads,
                              " heads"));
    }
    if (descriptor_len() + text_prompt_len > context) {
        throw UsageError(strf("model config: context ", context, " too short for ",
                              descriptor_len(), " descriptor tokens + ", text_prompt_len,
                              " prompt tokens"));
    }
    if (!(tau > 0.0)) throw UsageError("model config: temperature must be positive");
}

ClassDescriptor make_class_descriptor(const ModelConfig& cfg, std::size_t class_id) {
    if (class_id < 1 || class_id > cfg.classes) {
        throw DataError(strf("class descriptor: class id ", class_id, " outside [1..",
                             cfg.classes, "]"));
    }
    ClassDescriptor d;
    d.class_id = class_id;
    d.token_ids.reserve(cfg.descriptor_len());
    for (std::size_t i = 0; i < ModelConfig::kTemplateLen; ++i) d.token_ids.push_back(i);
    d.token_ids.push_back(ModelConfig::kTemplateLen + class_id - 1);
    return d;
}

std::vector<ClassDescriptor> make_class_descriptors(const ModelConfig& cfg) {
    std::vector<ClassDescriptor> out;
    out.reserve(cfg.classes);
    for (std::size_t c = 1; c <= cfg.classes; ++c) out.push_back(make_class_descriptor(cfg, c));
    return out;
}

Tensor patchify(const ModelConfig& cfg, const Tensor& image) {
    const std::vector<std::size_t> want{cfg.image_size, cfg.image_size, cfg.channels};
    if (image.shape != want) {
        throw ShapeError(strf("encode_image: image shape ", image.shape_str(), ", expected ",
                              shape_str(want)));
    }
    const std::size_t gsz = cfg.grid(), P = cfg.patch_size, C = cfg.channels,
                      W = cfg.image_size, pd = cfg.patch_dim();
    Tensor out = Tensor::zeros({cfg.num_patches(), pd});
    for (std::size_t py = 0; py < gsz; ++py) {
        for (std::size_t px = 0; px < gsz; ++px) {
            double* dst = out.values.data() + (py * gsz + px) * pd;
            std::size_t i = 0;
            for (std::size_t y = 0; y < P; ++y) {
                for (std::size_t x = 0; x < P; ++x) {
                    for (std::size_t c = 0; c < C; ++c) {
                        dst[i++] = image.values[((py * P + y) * W + (px * P + x)) * C + c];
                    }
                }
            }
        }
    }
    return out;
}

namespace {

TransformerBlock init_block(std::size_t d, Rng& rng) {
    const std::size_t hidden = 4 * d;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    TransformerBlock b;
    b.ln1_g = Tensor::full({d}, 1.0);
    b.ln1_b = Tensor::zeros({d});
    b.wq = Tensor::randn({d, d}, rng, s);
    b.bq = Tensor::zeros({d});
    b.wk = Tensor::randn({d, d}, rng, s);
    b.bk = Tensor::zeros({d});
    b.wv = Tensor::randn({d, d}, rng, s);
    b.bv = Tensor::zeros({d});
    b.wo = Tensor::randn({d, d}, rng, s);
    b.bo = Tensor::zeros({d});
    b.ln2_g = Tensor::full({d}, 1.0);
    b.ln2_b = Tensor::zeros({d});
    b.w1 = Tensor::randn({d, hidden}, rng, s);
    b.b1 = Tensor::zeros({hidden});
    b.w2 = Tensor::randn({hidden, d}, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
    b.b2 = Tensor::zeros({d});
    return b;
}

void block_params(std::vector<ParamRef>& out, TransformerBlock& b, const std::string& pre,
                  const std::string& role) {
    out.push_back({pre + ".ln1g", &b.ln1_g, role});
    out.push_back({pre + ".ln1b", &b.ln1_b, role});
    out.push_back({pre + ".wq", &b.wq, role});
    out.push_back({pre + ".bq", &b.bq, role});
    out.push_back({pre + ".wk", &b.wk, role});
    out.push_back({pre + ".bk", &b.bk, role});
    out.push_back({pre + ".wv", &b.wv, role});
    out.push_back({pre + ".bv", &b.bv, role});
    out.push_back({pre + ".wo", &b.wo, role});
    out.push_back({pre + ".bo", &b.bo, role});
    out.push_back({pre + ".ln2g", &b.ln2_g, role});
    out.push_back({pre + ".ln2b", &b.ln2_b, role});
    out.push_back({pre + ".w1", &b.w1, role});
    out.push_back({pre + ".b1", &b.b1, role});
    out.push_back({pre + ".w2", &b.w2, role});
    out.push_back({pre + ".b2", &b.b2, role});
}

// Pre-LN block: x += MHA(LN(x)); x += MLP(LN(x)).
NodeId block_forward(Graph& g, const Bound& b, const std::string& pre, NodeId x,
                     std::size_t heads) {
    const std::size_t d = g.value(x).cols();
    const std::size_t dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    NodeId h = g.layer_norm(x, b.id(pre + ".ln1g"), b.id(pre + ".ln1b"));
    NodeId q = g.add_row_broadcast(g.matmul(h, b.id(pre + ".wq")), b.id(pre + ".bq"));
    NodeId k = g.add_row_broadcast(g.matmul(h, b.id(pre + ".wk")), b.id(pre + ".bk"));
    NodeId v = g.add_row_broadcast(g.matmul(h, b.id(pre + ".wv")), b.id(pre + ".bv"));

    std::vector<NodeId> head_out;
    head_out.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
        NodeId qh = g.slice_cols(q, i * dh, (i + 1) * dh);
        NodeId kh = g.slice_cols(k, i * dh, (i + 1) * dh);
        NodeId vh = g.slice_cols(v, i * dh, (i + 1) * dh);
        NodeId att = g.softmax_rows(g.scale(g.matmul(qh, kh, false, true), inv_sqrt_dh));
        head_out.push_back(g.matmul(att, vh));
    }
    NodeId o = heads == 1 ? head_out[0] : g.concat_cols(head_out);
    o = g.add_row_broadcast(g.matmul(o, b.id(pre + ".wo")), b.id(pre + ".bo"));
    x = g.add(x, o);

    NodeId m = g.layer_norm(x, b.id(pre + ".ln2g"), b.id(pre + ".ln2b"));
    m = g.gelu(g.add_row_broadcast(g.matmul(m, b.id(pre + ".w1")), b.id(pre + ".b1")));
    m = g.add_row_broadcast(g.matmul(m, b.id(pre + ".w2")), b.id(pre + ".b2"));
    return g.add(x, m);
}

}  // namespace

DualEncoder DualEncoder::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    DualEncoder m;
    m.cfg = cfg;

    m.vision.patch_w = Tensor::randn({cfg.patch_dim(), cfg.d_e}, rng,
                                     1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())));
    m.vision.patch_b = Tensor::zeros({cfg.d_e});
    m.vision.class_token = Tensor::randn({1, cfg.d_e}, rng, 0.02);
    for (std::size_t k = 0; k < cfg.vision_layers; ++k) {
        m.vision.blocks.push_back(init_block(cfg.d_e, rng));
    }
    for (std::size_t k = 0; k < cfg.vision_layers; ++k) {
        m.vision.prompts.push_back(Tensor::randn({cfg.prompt_len, cfg.d_e}, rng, 0.02));
    }
    m.vision.projection =
        Tensor::randn({cfg.d_e, cfg.d_j}, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_e)));

    m.text.vocab_embed = Tensor::randn({cfg.vocab_size(), cfg.d_e}, rng, 0.02);
    m.text.pos_embed = Tensor::randn({cfg.context, cfg.d_e}, rng, 0.02);
    for (std::size_t k = 0; k < cfg.text_layers; ++k) {
        m.text.blocks.push_back(init_block(cfg.d_e, rng));
    }
    m.text.projection =
        Tensor::randn({cfg.d_e, cfg.d_j}, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_e)));
    return m;
}

std::vector<ParamRef> DualEncoder::params() {
    std::vector<ParamRef> out;
    out.push_back({"vision.patch_w", &vision.patch_w, "backbone"});
    out.push_back({"vision.patch_b", &vision.patch_b, "backbone"});
    out.push_back({"vision.cls", &vision.class_token, "backbone"});
    for (std::size_t k = 0; k < vision.blocks.size(); ++k) {
        block_params(out, vision.blocks[k], "vision.blk" + std::to_string(k), "backbone");
    }
    for (std::size_t k = 0; k < vision.prompts.size(); ++k) {
        out.push_back({"vision.prompt" + std::to_string(k), &vision.prompts[k], "prompt"});
    }
    out.push_back({"vision.proj", &vision.projection, "backbone"});
    out.push_back({"text.vocab", &text.vocab_embed, "backbone"});
    out.push_back({"text.pos", &text.pos_embed, "backbone"});
    for (std::size_t k = 0; k < text.blocks.size(); ++k) {
        block_params(out, text.blocks[k], "text.blk" + std::to_string(k), "backbone");
    }
    out.push_back({"text.proj", &text.projection, "backbone"});
    return out;
}

NodeId DualEncoder::encode_image(Graph& g, const Bound& b, const Tensor& image,
                                 bool with_prompts) const {
    NodeId e = g.add_row_broadcast(g.matmul(g.constant(patchify(cfg, image)),
                                            b.id("vision.patch_w")),
                                   b.id("vision.patch_b"));
    std::vector<NodeId> parts{b.id("vision.cls"), e};
    if (with_prompts) parts.push_back(b.id("vision.prompt0"));
    NodeId seq = g.concat_rows(parts);

    const std::size_t keep = 1 + cfg.num_patches();
    for (std::size_t k = 0; k < cfg.vision_layers; ++k) {
        seq = block_forward(g, b, "vision.blk" + std::to_string(k), seq, cfg.heads);
        if (with_prompts && k + 1 < cfg.vision_layers) {
            NodeId kept = g.slice_rows(seq, 0, keep);
            const NodeId next[] = {kept, b.id("vision.prompt" + std::to_string(k + 1))};
            seq = g.concat_rows(next);
        }
    }
    NodeId c_last = g.slice_rows(seq, 0, 1);
    return g.l2_normalize_rows(g.matmul(c_last, b.id("vision.proj")));
}

NodeId DualEncoder::encode_text(Graph& g, const Bound& b, const ClassDescriptor& desc,
                                std::optional<NodeId> vm) const {
    if (desc.token_ids.size() != cfg.descriptor_len()) {
        throw DataError(strf("encode_text: descriptor has ", desc.token_ids.size(),
                             " tokens, expected ", cfg.descriptor_len()));
    }
    NodeId tok = g.gather_rows(b.id("text.vocab"), desc.token_ids);
    // The prompt block is always part of the sequence — zeros when no v^m is
    // injected — so descriptor tokens keep the same positions in every mode
    // and a zero domain prompt reproduces the plain encoding exactly.
    NodeId block;
    if (vm) {
        const Tensor& vt = g.value(*vm);
        if (vt.rows() != cfg.text_prompt_len || vt.cols() != cfg.d_e) {
            throw ShapeError(strf("encode_text: v^m shape ", vt.shape_str(), ", expected [",
                                  cfg.text_prompt_len, ", ", cfg.d_e, "]"));
        }
        block = *vm;
    } else {
        block = g.constant(Tensor::zeros({cfg.text_prompt_len, cfg.d_e}));
    }
    const NodeId parts[] = {block, tok};
    NodeId seq0 = g.concat_rows(parts);
    const std::size_t len = desc.token_ids.size() + cfg.text_prompt_len;
    NodeId seq = g.add(seq0, g.slice_rows(b.id("text.pos"), 0, len));
    for (std::size_t k = 0; k < cfg.text_layers; ++k) {
        seq = block_forward(g, b, "text.blk" + std::to_string(k), seq, cfg.heads);
    }
    NodeId last = g.slice_rows(seq, len - 1, len);
    return g.l2_normalize_rows(g.matmul(last, b.id("text.proj")));
}

}  // namespace tpl
