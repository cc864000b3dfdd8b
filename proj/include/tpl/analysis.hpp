// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Feature diagnostics: domain-invariance and class-separability metrics,
// classical MDS to two dimensions, Gaussian confidence ellipses, and the
// CSV/SVG report exporter. All distances here are the scheduler's
// half-cosine distance between renormalized centroids, so metric traces and
// schedule inputs measure the same quantity.

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tpl/scheduler.hpp"

namespace tpl {

// Rows of projected features with bookkeeping tags. points, splits, and
// iterations are parallel arrays; split tags are free-form but nonempty
// (conventionally "train", "val", "target").
struct FeatureDump {
    std::size_t dim = 0;
    std::vector<FeaturePoint> points;
    std::vector<std::string> splits;
    std::vector<std::size_t> iterations;

    std::size_t count() const { return points.size(); }
    void append(FeaturePoint point, std::string split, std::size_t iteration);
    // Consistent width, 1-based class/domain ids, nonempty tags, parallel
    // array lengths.
    void validate() const;
};

// <stem>.json manifest + <stem>.bin buffer (magic "TPLF"). Round-trips are
// bit-identical.
void save_dump(const std::string& stem, const FeatureDump& dump);
FeatureDump load_dump(const std::string& stem);

// A per-group metric. Groups without enough members to form a pair are
// listed in skipped (the caller decides whether to warn); mean averages the
// surviving groups.
struct MetricReport {
    std::map<std::size_t, double> per_group;
    double mean = 0.0;
    std::vector<std::size_t> skipped;
};

// Per class: mean pairwise half-cosine distance between that class's
// renormalized domain centroids. Lower = more domain-invariant. Classes seen
// in fewer than two domains are skipped; all classes skipped is an error.
MetricReport domain_invariance_metric(const FeatureDump& dump);

// Per domain: mean pairwise half-cosine distance between that domain's
// renormalized class centroids. Higher = more separable. A domain with fewer
// than two classes is an error.
MetricReport class_separability_metric(const FeatureDump& dump);

struct Embedding2D {
    std::vector<std::array<double, 2>> coords;  // one (x, y) per dump row
    std::array<double, 2> eigenvalues{0.0, 0.0};
};

// Classical multidimensional scaling to two dimensions: B = -1/2 J D^2 J of
// the pairwise Euclidean distances, top-2 eigenpairs by power iteration with
// deflation, coordinates = eigenvector * sqrt(eigenvalue). Needs >= 3 rows.
Embedding2D classical_mds(const FeatureDump& dump);

// 95% confidence ellipse of a 2-D Gaussian fit: semi-axes are
// sqrt(5.991 * eigenvalue) of the sample covariance; angle is the principal
// axis direction in radians. A (near-)singular covariance sets degenerate
// instead of failing.
struct EllipseFit {
    std::array<double, 2> mean{0.0, 0.0};
    double major = 0.0;
    double minor = 0.0;
    double angle = 0.0;
    bool degenerate = false;
};

EllipseFit gaussian_ellipse(std::span<const std::array<double, 2>> points);

// Everything behind one report. dump and embedding describe the same rows;
// history may be empty, which skips the schedule outputs.
struct ReportInputs {
    MetricReport invariance;    // keyed by class id
    MetricReport separability;  // keyed by domain id
    const FeatureDump* dump = nullptr;
    Embedding2D embedding;
    std::vector<ScheduleRecord> history;
};

// Writes metrics.csv, embedding.csv, fig_features.svg, fig_metrics.svg and,
// when history is present, schedule.csv + fig_schedule.svg under dir.
// Returns the written paths. Inputs are validated before any file is
// created; identical inputs produce byte-identical files.
std::vector<std::string> export_report(const ReportInputs& in, const std::string& dir);

}  // namespace tpl
