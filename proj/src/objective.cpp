// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/objective.hpp"

namespace tpl {

namespace {

void validate_batch(const LossBatch& b) {
    if (b.image_features.empty()) throw ShapeError("loss: empty batch");
    if (b.labels.size() != b.image_features.size() ||
        b.domains.size() != b.image_features.size()) {
        throw ShapeError(strf("loss: ", b.image_features.size(), " features vs ",
                              b.labels.size(), " labels vs ", b.domains.size(), " domains"));
    }
    if (b.text_agnostic.empty()) throw ShapeError("loss: no text features");
    if (!(b.tau > 0.0)) throw UsageError(strf("loss: temperature ", b.tau, " must be > 0"));
    const std::size_t C = b.text_agnostic.size();
    for (std::size_t y : b.labels) {
        if (y < 1 || y > C) {
            throw DataError(strf("loss: label ", y, " outside [1..", C, "]"));
        }
    }
}

// -log softmax over classes of sim(feat, text_j)/tau, taken at the label.
NodeId per_sample_ce(Graph& g, NodeId feat, const std::vector<NodeId>& text,
                     std::size_t label, double tau) {
    std::vector<NodeId> sims;
    sims.reserve(text.size());
    for (NodeId t : text) sims.push_back(g.cosine_similarity(feat, t));
    NodeId p = g.softmax_rows(g.scale(g.concat_cols(sims), 1.0 / tau));
    return g.scale(g.log(g.slice_cols(p, label - 1, label)), -1.0);
}

NodeId sum_samples(Graph& g, const std::vector<NodeId>& parts) {
    return g.sum(parts.size() == 1 ? parts[0] : g.concat_cols(parts));
}

}  // namespace

NodeId loss_lv(Graph& g, const LossBatch& batch) {
    validate_batch(batch);
    std::vector<NodeId> parts;
    parts.reserve(batch.image_features.size());
    for (std::size_t i = 0; i < batch.image_features.size(); ++i) {
        parts.push_back(per_sample_ce(g, batch.image_features[i], batch.text_agnostic,
                                      batch.labels[i], batch.tau));
    }
    return sum_samples(g, parts);
}

NodeId loss_ls(Graph& g, const LossBatch& batch) {
    validate_batch(batch);
    const std::size_t C = batch.text_agnostic.size();
    std::vector<NodeId> parts;
    parts.reserve(batch.image_features.size());
    for (std::size_t i = 0; i < batch.image_features.size(); ++i) {
        auto it = batch.text_domain.find(batch.domains[i]);
        if (it == batch.text_domain.end()) {
            throw DataError(strf("loss_LS: no domain-specific text features for domain ",
                                 batch.domains[i]));
        }
        if (it->second.size() != C) {
            throw DataError(strf("loss_LS: domain ", batch.domains[i], " has ",
                                 it->second.size(), " text features, expected ", C));
        }
        parts.push_back(per_sample_ce(g, batch.image_features[i], it->second,
                                      batch.labels[i], batch.tau));
    }
    return sum_samples(g, parts);
}

NodeId total_loss(Graph& g, NodeId lv, NodeId ls, double w_v, double w_s) {
    if (w_v < 0.0 || w_s < 0.0) {
        throw NumericError(strf("total_loss: negative weights (", w_v, ", ", w_s, ")"));
    }
    return g.add(g.scale(lv, w_v), g.scale(ls, w_s));
}

}  // namespace tpl
