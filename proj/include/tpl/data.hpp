// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-domain benchmark: class identity is a procedural glyph,
// domain identity is a style transform (channel affine, background texture,
// noise, blur). Storage is a JSON manifest plus a raw little-endian buffer
// (magic "TPLD"), and leave-one-domain-out splits are stratified by class.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tpl/common.hpp"
#include "tpl/tensor.hpp"

namespace tpl {

struct DatasetConfig {
    std::size_t classes = 16;  // 8 glyphs x 2 scale octaves
    std::size_t domains = 4;   // sources + the held-out target
    std::size_t per_cell = 48;
    std::size_t image_size = 32;
    std::size_t channels = 3;
    std::uint64_t seed = 0;
};

// Raw-pixel nearest-class-centroid probe, run at generation time: fit on the
// first half of each (class, domain) cell, test on the second half, both
// within each domain and across domain pairs.
struct OracleReport {
    std::vector<double> within;      // accuracy per domain, index domain-1
    std::vector<double> cross_mean;  // mean accuracy on other domains, per fit domain
    double min_within = 0.0;
    double mean_degradation = 0.0;   // mean over fit domains of within - cross
};

struct DomainDataset {
    DatasetConfig cfg;
    std::vector<float> images;          // N * H * W * C, row-major, values in [0,1]
    std::vector<std::uint16_t> labels;  // 1-based class ids
    std::vector<std::uint16_t> domains; // 1-based domain ids
    OracleReport oracle;
    std::string config_hash;

    std::size_t count() const { return labels.size(); }
    std::size_t pixels() const { return cfg.image_size * cfg.image_size * cfg.channels; }
    // Count per (class, domain) cell, computed from the live arrays.
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> cell_counts() const;
};

// Deterministic in (cfg); every (class, domain) cell draws from its own
// RNG stream forked from (seed, class, domain).
DomainDataset generate_synthetic(const DatasetConfig& cfg);

// One image as a {H, W, C} double tensor for the encoders.
Tensor image_as_tensor(const DomainDataset& ds, std::size_t index);

// Rerun the nearest-centroid probe (identical to the generation-time one).
OracleReport run_pixel_oracle(const DomainDataset& ds);

// <stem>.json manifest + <stem>.bin buffer. Round-trips are bit-identical.
void save_dataset(const std::string& stem, const DomainDataset& ds);
DomainDataset load_dataset(const std::string& stem);

struct SplitLists {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

struct SplitPlan {
    std::size_t target_domain = 0;
    double val_fraction = 0.0;
    std::map<std::size_t, SplitLists> sources;  // domain id -> global indices

    std::vector<std::size_t> all_train() const;
    std::vector<std::size_t> all_val() const;
    // Global indices of every target-domain sample.
    std::vector<std::size_t> target_indices(const DomainDataset& ds) const;
};

// Stratified per (source domain, class): train gets floor((1-f) * cell),
// validation the rest; the target domain appears in neither list.
SplitPlan make_splits(const DomainDataset& ds, std::size_t target, double val_fraction,
                      std::uint64_t seed);

}  // namespace tpl
