// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace tpl {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'L', 'F'};
constexpr int kVersion = 1;

// group id -> (member id -> unit centroid); the outer key is the class for
// the invariance metric and the domain for the separability metric.
using Grouped = std::map<std::size_t, std::map<std::size_t, std::vector<double>>>;

Grouped group_centroids(const FeatureDump& dump, bool by_class) {
    Grouped grouped;
    for (auto& [key, mu] : unit_centroids(dump.points)) {
        const std::size_t outer = by_class ? key.first : key.second;
        const std::size_t inner = by_class ? key.second : key.first;
        grouped[outer].emplace(inner, std::move(mu));
    }
    return grouped;
}

double mean_pairwise(const std::map<std::size_t, std::vector<double>>& members) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (auto a = members.begin(); a != members.end(); ++a) {
        for (auto b = std::next(a); b != members.end(); ++b) {
            sum += half_cosine_distance(a->second, b->second);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double mean_of_groups(const std::map<std::size_t, double>& per_group) {
    double sum = 0.0;
    for (const auto& [id, v] : per_group) sum += v;
    return sum / static_cast<double>(per_group.size());
}

// Largest-eigenvalue pair of the symmetric n x n matrix b (row-major) by
// power iteration; converged when successive Rayleigh quotients differ by
// less than 1e-10. The returned vector is unit length with a canonical sign.
std::pair<double, std::vector<double>> top_eigenpair(const std::vector<double>& b,
                                                     std::size_t n) {
    constexpr std::size_t kMaxIters = 10000;
    constexpr double kTol = 1e-10;

    Rng rng(0x54504c46);  // fixed stream: deterministic output
    std::vector<double> v(n);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;

    std::vector<double> w(n);
    double rayleigh = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < kMaxIters; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* row = b.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) s += row[j] * v[j];
            w[i] = s;
        }
        rayleigh = 0.0;
        double wnorm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            rayleigh += v[i] * w[i];
            wnorm += w[i] * w[i];
        }
        wnorm = std::sqrt(wnorm);
        if (wnorm < 1e-300) {
            // the (deflated) matrix is numerically zero in this direction
            rayleigh = 0.0;
            prev = rayleigh;
            break;
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wnorm;
        if (std::abs(rayleigh - prev) < kTol) {
            prev = rayleigh;
            break;
        }
        prev = rayleigh;
    }
    if (std::abs(rayleigh - prev) >= kTol) {
        throw NumericError(strf("mds: power iteration did not converge in ", kMaxIters,
                                " steps; Rayleigh residual ", std::abs(rayleigh - prev)));
    }

    std::size_t arg = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    }
    if (v[arg] < 0.0) {
        for (double& x : v) x = -x;
    }
    return {rayleigh, std::move(v)};
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

// Deterministic colors per class and marker shapes per domain.
const char* class_color(std::size_t cls) {
    static const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                                     "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};
    return kPalette[(cls - 1) % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

void append_marker(std::string& svg, std::size_t domain, double x, double y,
                   const char* color) {
    const double r = 4.0;
    const std::string xs = fmt("%.2f", x);
    const std::string ys = fmt("%.2f", y);
    switch ((domain - 1) % 4) {
        case 0:
            svg += "<circle cx=\"" + xs + "\" cy=\"" + ys + "\" r=\"" + fmt("%.2f", r) +
                   "\" fill=\"" + color + "\" fill-opacity=\"0.8\"/>\n";
            break;
        case 1:
            svg += "<rect x=\"" + fmt("%.2f", x - r) + "\" y=\"" + fmt("%.2f", y - r) +
                   "\" width=\"" + fmt("%.2f", 2 * r) + "\" height=\"" + fmt("%.2f", 2 * r) +
                   "\" fill=\"" + color + "\" fill-opacity=\"0.8\"/>\n";
            break;
        case 2:
            svg += "<path d=\"M " + xs + " " + fmt("%.2f", y - r) + " L " +
                   fmt("%.2f", x - r) + " " + fmt("%.2f", y + r) + " L " +
                   fmt("%.2f", x + r) + " " + fmt("%.2f", y + r) + " Z\" fill=\"" + color +
                   "\" fill-opacity=\"0.8\"/>\n";
            break;
        default:
            svg += "<path d=\"M " + xs + " " + fmt("%.2f", y - r) + " L " +
                   fmt("%.2f", x + r) + " " + ys + " L " + xs + " " + fmt("%.2f", y + r) +
                   " L " + fmt("%.2f", x - r) + " " + ys + " Z\" fill=\"" + color +
                   "\" fill-opacity=\"0.8\"/>\n";
            break;
    }
}

std::string text_at(double x, double y, const std::string& s, const char* anchor = "start") {
    return "<text x=\"" + fmt("%.2f", x) + "\" y=\"" + fmt("%.2f", y) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"" + anchor + "\">" +
           s + "</text>\n";
}

std::string svg_open(double w, double h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", w) +
           "\" height=\"" + fmt("%.0f", h) + "\" viewBox=\"0 0 " + fmt("%.0f", w) + " " +
           fmt("%.0f", h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string line(double x1, double y1, double x2, double y2, const char* color,
                 double width = 1.0) {
    return "<line x1=\"" + fmt("%.2f", x1) + "\" y1=\"" + fmt("%.2f", y1) + "\" x2=\"" +
           fmt("%.2f", x2) + "\" y2=\"" + fmt("%.2f", y2) + "\" stroke=\"" + color +
           "\" stroke-width=\"" + fmt("%.1f", width) + "\"/>\n";
}

// Scatter of the embedding with one 95% ellipse per class.
std::string render_features_svg(const FeatureDump& dump, const Embedding2D& emb) {
    const double kW = 640.0, kH = 480.0, kMargin = 50.0;

    double xmin = emb.coords[0][0], xmax = xmin, ymin = emb.coords[0][1], ymax = ymin;
    for (const auto& c : emb.coords) {
        xmin = std::min(xmin, c[0]);
        xmax = std::max(xmax, c[0]);
        ymin = std::min(ymin, c[1]);
        ymax = std::max(ymax, c[1]);
    }
    const double spanx = std::max(xmax - xmin, 1e-12);
    const double spany = std::max(ymax - ymin, 1e-12);
    // isotropic mapping so ellipse geometry survives the projection
    const double s = std::min((kW - 2 * kMargin) / spanx, (kH - 2 * kMargin) / spany);
    const double cx = (xmin + xmax) / 2, cy = (ymin + ymax) / 2;
    auto px = [&](double x) { return kW / 2 + (x - cx) * s; };
    auto py = [&](double y) { return kH / 2 - (y - cy) * s; };

    std::string svg = svg_open(kW, kH);
    svg += text_at(kW / 2, 20, "2-D feature embedding (classical MDS)", "middle");

    std::map<std::size_t, std::vector<std::array<double, 2>>> per_class;
    for (std::size_t i = 0; i < dump.count(); ++i) {
        per_class[dump.points[i].label].push_back(emb.coords[i]);
    }
    for (const auto& [cls, pts] : per_class) {
        if (pts.size() < 3) continue;
        EllipseFit e = gaussian_ellipse(pts);
        if (e.degenerate) continue;
        const double deg = -e.angle * 180.0 / 3.14159265358979323846;
        svg += "<ellipse cx=\"" + fmt("%.2f", px(e.mean[0])) + "\" cy=\"" +
               fmt("%.2f", py(e.mean[1])) + "\" rx=\"" + fmt("%.2f", e.major * s) +
               "\" ry=\"" + fmt("%.2f", e.minor * s) + "\" fill=\"none\" stroke=\"" +
               class_color(cls) + "\" stroke-width=\"1.2\" transform=\"rotate(" +
               fmt("%.2f", deg) + " " + fmt("%.2f", px(e.mean[0])) + " " +
               fmt("%.2f", py(e.mean[1])) + ")\"/>\n";
    }
    for (std::size_t i = 0; i < dump.count(); ++i) {
        append_marker(svg, dump.points[i].domain, px(emb.coords[i][0]), py(emb.coords[i][1]),
                      class_color(dump.points[i].label));
    }

    // legend: classes by color, domains by shape
    double ly = 40.0;
    for (const auto& [cls, pts] : per_class) {
        (void)pts;
        svg += "<rect x=\"10\" y=\"" + fmt("%.2f", ly - 8) +
               "\" width=\"10\" height=\"10\" fill=\"" + class_color(cls) + "\"/>\n";
        svg += text_at(24, ly, "class " + std::to_string(cls));
        ly += 16.0;
    }
    std::map<std::size_t, bool> seen_domains;
    for (const auto& p : dump.points) seen_domains[p.domain] = true;
    ly += 8.0;
    for (const auto& [dom, unused] : seen_domains) {
        (void)unused;
        append_marker(svg, dom, 15, ly - 4, "#444444");
        svg += text_at(24, ly, "domain " + std::to_string(dom));
        ly += 16.0;
    }
    svg += "</svg>\n";
    return svg;
}

// Two bar panels: per-class invariance (lower = better) and per-domain
// separability (higher = better); the y scale is the [0, 1] distance range.
std::string render_metrics_svg(const MetricReport& inv, const MetricReport& sep) {
    const double kW = 640.0, kH = 320.0, kPanelW = 280.0, kBase = 260.0, kTop = 50.0;

    std::string svg = svg_open(kW, kH);
    auto panel = [&](double x0, const MetricReport& m, const std::string& title,
                     const std::string& prefix, const char* color) {
        svg += text_at(x0 + kPanelW / 2, 30, title, "middle");
        svg += line(x0, kBase, x0 + kPanelW, kBase, "#222222");
        const double n = static_cast<double>(m.per_group.size());
        const double slot = kPanelW / std::max(n, 1.0);
        const double bw = slot * 0.6;
        double x = x0 + slot * 0.2;
        for (const auto& [id, v] : m.per_group) {
            const double h = std::clamp(v, 0.0, 1.0) * (kBase - kTop);
            svg += "<rect x=\"" + fmt("%.2f", x) + "\" y=\"" + fmt("%.2f", kBase - h) +
                   "\" width=\"" + fmt("%.2f", bw) + "\" height=\"" + fmt("%.2f", h) +
                   "\" fill=\"" + color + "\"/>\n";
            svg += text_at(x + bw / 2, kBase - h - 4, fmt("%.3f", v), "middle");
            svg += text_at(x + bw / 2, kBase + 14, prefix + std::to_string(id), "middle");
            x += slot;
        }
        svg += text_at(x0 + kPanelW / 2, kBase + 32, "mean " + fmt("%.4f", m.mean), "middle");
    };
    panel(30.0, inv, "inter-domain distance per class", "c", "#4c72b0");
    panel(330.0, sep, "inter-class distance per domain", "d", "#55a868");
    svg += "</svg>\n";
    return svg;
}

// d, w_V, and w_S against the iteration axis; all three live in [0, 1].
std::string render_schedule_svg(const std::vector<ScheduleRecord>& history) {
    const double kW = 640.0, kH = 320.0, kL = 60.0, kR = 600.0, kBase = 270.0, kTop = 40.0;
    const double tmax = static_cast<double>(std::max<std::size_t>(history.back().t, 1));

    auto px = [&](double t) { return kL + (kR - kL) * (t / tmax); };
    auto py = [&](double v) { return kBase - (kBase - kTop) * std::clamp(v, 0.0, 1.0); };

    std::string svg = svg_open(kW, kH);
    svg += text_at(kW / 2, 20, "measured distance and loss weights", "middle");
    svg += line(kL, kBase, kR, kBase, "#222222");
    svg += line(kL, kBase, kL, kTop, "#222222");
    for (double tick : {0.0, 0.5, 1.0}) {
        svg += line(kL - 4, py(tick), kL, py(tick), "#222222");
        svg += text_at(kL - 8, py(tick) + 4, fmt("%.1f", tick), "end");
    }
    svg += text_at(kR, kBase + 16, "t = " + fmt("%.0f", tmax), "end");

    struct Series {
        const char* color;
        const char* label;
        double ScheduleRecord::*field;
    };
    const Series series[] = {{"#222222", "d", &ScheduleRecord::d},
                             {"#4c72b0", "w_V", &ScheduleRecord::w_v},
                             {"#c44e52", "w_S", &ScheduleRecord::w_s}};
    double lx = kL + 10;
    for (const Series& sr : series) {
        std::string pts;
        for (const ScheduleRecord& r : history) {
            pts += fmt("%.2f", px(static_cast<double>(r.t))) + "," +
                   fmt("%.2f", py(r.*sr.field)) + " ";
        }
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + sr.color +
               "\" stroke-width=\"1.5\"/>\n";
        svg += line(lx, 30, lx + 18, 30, sr.color, 2.0);
        svg += text_at(lx + 22, 34, sr.label);
        lx += 70;
    }
    svg += "</svg>\n";
    return svg;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError(strf("report: cannot write ", path.string()));
    os << content;
    if (!os) throw DataError(strf("report: write failed for ", path.string()));
}

}  // namespace

void FeatureDump::append(FeaturePoint point, std::string split, std::size_t iteration) {
    if (points.empty()) dim = point.feature.size();
    points.push_back(std::move(point));
    splits.push_back(std::move(split));
    iterations.push_back(iteration);
}

void FeatureDump::validate() const {
    if (splits.size() != points.size() || iterations.size() != points.size()) {
        throw ShapeError(strf("feature dump: parallel arrays disagree: ", points.size(),
                              " points, ", splits.size(), " splits, ", iterations.size(),
                              " iterations"));
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        const FeaturePoint& p = points[i];
        if (p.feature.size() != dim) {
            throw ShapeError(strf("feature dump: row ", i, " has width ", p.feature.size(),
                                  ", expected ", dim));
        }
        if (p.label == 0 || p.domain == 0) {
            throw DataError(strf("feature dump: row ", i, ": class and domain ids are 1-based"));
        }
        if (splits[i].empty() || splits[i].find_first_of(",\n") != std::string::npos) {
            throw DataError(strf("feature dump: row ", i, ": split tag must be nonempty ",
                                 "and free of commas and newlines"));
        }
    }
}

void save_dump(const std::string& stem, const FeatureDump& dump) {
    dump.validate();

    std::vector<std::string> tags;
    std::vector<std::uint16_t> tag_index(dump.count());
    for (std::size_t i = 0; i < dump.count(); ++i) {
        auto it = std::find(tags.begin(), tags.end(), dump.splits[i]);
        if (it == tags.end()) {
            if (tags.size() >= 65535) throw DataError("feature dump: too many split tags");
            tags.push_back(dump.splits[i]);
            it = std::prev(tags.end());
        }
        tag_index[i] = static_cast<std::uint16_t>(it - tags.begin());
    }

    nlohmann::json manifest;
    manifest["format"] = "tplf";
    manifest["version"] = kVersion;
    manifest["dim"] = dump.dim;
    manifest["count"] = dump.count();
    manifest["split_tags"] = tags;

    std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError(strf("feature dump: cannot write ", stem, ".bin"));
    bin.write(kMagic, 4);
    bin.put(static_cast<char>(kVersion));
    std::vector<std::uint32_t> ids(dump.count());
    for (std::size_t i = 0; i < dump.count(); ++i) {
        bin.write(reinterpret_cast<const char*>(dump.points[i].feature.data()),
                  static_cast<std::streamsize>(dump.dim * sizeof(double)));
    }
    for (std::size_t i = 0; i < dump.count(); ++i) {
        ids[i] = static_cast<std::uint32_t>(dump.points[i].label);
    }
    bin.write(reinterpret_cast<const char*>(ids.data()),
              static_cast<std::streamsize>(ids.size() * sizeof(std::uint32_t)));
    for (std::size_t i = 0; i < dump.count(); ++i) {
        ids[i] = static_cast<std::uint32_t>(dump.points[i].domain);
    }
    bin.write(reinterpret_cast<const char*>(ids.data()),
              static_cast<std::streamsize>(ids.size() * sizeof(std::uint32_t)));
    bin.write(reinterpret_cast<const char*>(tag_index.data()),
              static_cast<std::streamsize>(tag_index.size() * sizeof(std::uint16_t)));
    std::vector<std::uint64_t> iters(dump.iterations.begin(), dump.iterations.end());
    bin.write(reinterpret_cast<const char*>(iters.data()),
              static_cast<std::streamsize>(iters.size() * sizeof(std::uint64_t)));
    if (!bin) throw DataError(strf("feature dump: write failed for ", stem, ".bin"));
    bin.close();

    std::ofstream jf(stem + ".json", std::ios::trunc);
    if (!jf) throw DataError(strf("feature dump: cannot write ", stem, ".json"));
    jf << manifest.dump(2) << "\n";
    if (!jf) throw DataError(strf("feature dump: write failed for ", stem, ".json"));
}

FeatureDump load_dump(const std::string& stem) {
    std::ifstream jf(stem + ".json");
    if (!jf) throw DataError(strf("feature dump: cannot open ", stem, ".json"));
    nlohmann::json manifest;
    try {
        jf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(strf("feature dump: bad manifest ", stem, ".json: ", e.what()));
    }
    if (manifest.value("format", "") != "tplf" || manifest.value("version", 0) != kVersion) {
        throw DataError(strf("feature dump: ", stem, ".json is not a tplf v", kVersion,
                             " manifest"));
    }
    const std::size_t dim = manifest.at("dim").get<std::size_t>();
    const std::size_t count = manifest.at("count").get<std::size_t>();
    const auto tags = manifest.at("split_tags").get<std::vector<std::string>>();

    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw DataError(strf("feature dump: cannot open ", stem, ".bin"));
    char magic[4];
    bin.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError(strf("feature dump: ", stem, ".bin has bad magic bytes"));
    }
    if (bin.get() != kVersion) {
        throw DataError(strf("feature dump: ", stem, ".bin has an unsupported version"));
    }

    FeatureDump dump;
    dump.dim = dim;
    dump.points.resize(count);
    dump.splits.resize(count);
    dump.iterations.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        dump.points[i].feature.resize(dim);
        bin.read(reinterpret_cast<char*>(dump.points[i].feature.data()),
                 static_cast<std::streamsize>(dim * sizeof(double)));
    }
    std::vector<std::uint32_t> ids(count);
    bin.read(reinterpret_cast<char*>(ids.data()),
             static_cast<std::streamsize>(ids.size() * sizeof(std::uint32_t)));
    for (std::size_t i = 0; i < count; ++i) dump.points[i].label = ids[i];
    bin.read(reinterpret_cast<char*>(ids.data()),
             static_cast<std::streamsize>(ids.size() * sizeof(std::uint32_t)));
    for (std::size_t i = 0; i < count; ++i) dump.points[i].domain = ids[i];
    std::vector<std::uint16_t> tag_index(count);
    bin.read(reinterpret_cast<char*>(tag_index.data()),
             static_cast<std::streamsize>(tag_index.size() * sizeof(std::uint16_t)));
    std::vector<std::uint64_t> iters(count);
    bin.read(reinterpret_cast<char*>(iters.data()),
             static_cast<std::streamsize>(iters.size() * sizeof(std::uint64_t)));
    if (!bin) throw DataError(strf("feature dump: ", stem, ".bin is truncated"));
    bin.peek();
    if (!bin.eof()) throw DataError(strf("feature dump: ", stem, ".bin has trailing bytes"));

    for (std::size_t i = 0; i < count; ++i) {
        if (tag_index[i] >= tags.size()) {
            throw DataError(strf("feature dump: row ", i, " references split tag ",
                                 tag_index[i], " of ", tags.size()));
        }
        dump.splits[i] = tags[tag_index[i]];
        dump.iterations[i] = iters[i];
    }
    dump.validate();
    return dump;
}

MetricReport domain_invariance_metric(const FeatureDump& dump) {
    dump.validate();
    MetricReport out;
    for (const auto& [cls, domains] : group_centroids(dump, /*by_class=*/true)) {
        if (domains.size() < 2) {
            out.skipped.push_back(cls);
            continue;
        }
        out.per_group[cls] = mean_pairwise(domains);
    }
    if (out.per_group.empty()) {
        throw DataError("domain invariance: no class is present in two or more domains");
    }
    out.mean = mean_of_groups(out.per_group);
    return out;
}

MetricReport class_separability_metric(const FeatureDump& dump) {
    dump.validate();
    MetricReport out;
    for (const auto& [dom, classes] : group_centroids(dump, /*by_class=*/false)) {
        if (classes.size() < 2) {
            throw DataError(strf("class separability: domain ", dom,
                                 " has a single class; need at least two"));
        }
        out.per_group[dom] = mean_pairwise(classes);
    }
    out.mean = mean_of_groups(out.per_group);
    return out;
}

Embedding2D classical_mds(const FeatureDump& dump) {
    dump.validate();
    const std::size_t n = dump.count();
    if (n < 3) {
        throw ShapeError(strf("mds: need at least 3 rows, got ", n));
    }

    // squared Euclidean distances, then the double-centered Gram matrix
    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& fi = dump.points[i].feature;
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& fj = dump.points[j].feature;
            double s = 0.0;
            for (std::size_t k = 0; k < dump.dim; ++k) {
                const double diff = fi[k] - fj[k];
                s += diff * diff;
            }
            d2[i * n + j] = s;
            d2[j * n + i] = s;
        }
    }
    std::vector<double> row_mean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += d2[i * n + j];
        row_mean[i] = s / static_cast<double>(n);
        grand += s;
    }
    grand /= static_cast<double>(n) * static_cast<double>(n);
    std::vector<double> b(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            b[i * n + j] = -0.5 * (d2[i * n + j] - row_mean[i] - row_mean[j] + grand);
        }
    }

    auto [l1, v1] = top_eigenpair(b, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            b[i * n + j] -= l1 * v1[i] * v1[j];
        }
    }
    auto [l2, v2] = top_eigenpair(b, n);
    if (l2 > l1) {
        std::swap(l1, l2);
        std::swap(v1, v2);
    }

    Embedding2D emb;
    emb.eigenvalues = {l1, l2};
    const double s1 = std::sqrt(std::max(l1, 0.0));
    const double s2 = std::sqrt(std::max(l2, 0.0));
    emb.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        emb.coords[i] = {v1[i] * s1, v2[i] * s2};
    }
    return emb;
}

EllipseFit gaussian_ellipse(std::span<const std::array<double, 2>> points) {
    const std::size_t n = points.size();
    if (n < 3) {
        throw ShapeError(strf("gaussian ellipse: need at least 3 points, got ", n));
    }
    // chi-square(2) 0.95 quantile: P(x^2 <= 5.991) = 0.95
    constexpr double kChi2 = 5.991;

    EllipseFit fit;
    for (const auto& p : points) {
        fit.mean[0] += p[0];
        fit.mean[1] += p[1];
    }
    fit.mean[0] /= static_cast<double>(n);
    fit.mean[1] /= static_cast<double>(n);

    double a = 0.0, bcov = 0.0, c = 0.0;  // sample covariance [[a, b], [b, c]]
    for (const auto& p : points) {
        const double dx = p[0] - fit.mean[0];
        const double dy = p[1] - fit.mean[1];
        a += dx * dx;
        bcov += dx * dy;
        c += dy * dy;
    }
    a /= static_cast<double>(n - 1);
    bcov /= static_cast<double>(n - 1);
    c /= static_cast<double>(n - 1);

    const double half_tr = (a + c) / 2.0;
    const double disc = std::sqrt((a - c) * (a - c) / 4.0 + bcov * bcov);
    const double l1 = half_tr + disc;
    const double l2 = half_tr - disc;

    fit.major = std::sqrt(kChi2 * std::max(l1, 0.0));
    fit.minor = std::sqrt(kChi2 * std::max(l2, 0.0));
    fit.degenerate = !(l1 > 0.0) || l2 <= l1 * 1e-12;

    const double scale = std::max(std::abs(a) + std::abs(c), 1e-300);
    if (disc <= scale * 1e-12) {
        fit.angle = 0.0;  // isotropic: every direction is principal
    } else if (std::abs(bcov) > scale * 1e-15) {
        fit.angle = std::atan2(bcov, l1 - c);
    } else {
        fit.angle = a >= c ? 0.0 : std::atan2(1.0, 0.0);
    }
    return fit;
}

std::vector<std::string> export_report(const ReportInputs& in, const std::string& dir) {
    if (in.invariance.per_group.empty()) {
        throw UsageError("report: the invariance metric has no groups");
    }
    if (in.separability.per_group.empty()) {
        throw UsageError("report: the separability metric has no groups");
    }
    if (in.dump == nullptr) {
        throw UsageError("report: no feature dump behind the embedding");
    }
    in.dump->validate();
    if (in.dump->count() == 0 || in.embedding.coords.size() != in.dump->count()) {
        throw ShapeError(strf("report: embedding has ", in.embedding.coords.size(),
                              " rows for ", in.dump->count(), " dump rows"));
    }
    for (const auto& c : in.embedding.coords) {
        if (!std::isfinite(c[0]) || !std::isfinite(c[1])) {
            throw NumericError("report: non-finite embedding coordinate");
        }
    }

    // render everything before the first write so failures cannot leave a
    // partial report behind
    std::string metrics_csv = "metric,group,value\n";
    for (const auto& [cls, v] : in.invariance.per_group) {
        metrics_csv += "invariance," + std::to_string(cls) + "," + g17(v) + "\n";
    }
    metrics_csv += "invariance,mean," + g17(in.invariance.mean) + "\n";
    for (const auto& [dom, v] : in.separability.per_group) {
        metrics_csv += "separability," + std::to_string(dom) + "," + g17(v) + "\n";
    }
    metrics_csv += "separability,mean," + g17(in.separability.mean) + "\n";

    std::string embedding_csv = "x,y,class,domain,split,iteration\n";
    for (std::size_t i = 0; i < in.dump->count(); ++i) {
        embedding_csv += g17(in.embedding.coords[i][0]) + "," + g17(in.embedding.coords[i][1]) +
                         "," + std::to_string(in.dump->points[i].label) + "," +
                         std::to_string(in.dump->points[i].domain) + "," + in.dump->splits[i] +
                         "," + std::to_string(in.dump->iterations[i]) + "\n";
    }

    std::string schedule_csv;
    if (!in.history.empty()) {
        schedule_csv = "t,d,lambda,w_V,w_S\n";
        for (const ScheduleRecord& r : in.history) {
            schedule_csv += std::to_string(r.t) + "," + g17(r.d) + "," + g17(r.lambda) + "," +
                            g17(r.w_v) + "," + g17(r.w_s) + "\n";
        }
    }

    const std::string features_svg = render_features_svg(*in.dump, in.embedding);
    const std::string metrics_svg = render_metrics_svg(in.invariance, in.separability);
    const std::string schedule_svg =
        in.history.empty() ? std::string() : render_schedule_svg(in.history);

    const std::filesystem::path base(dir);
    std::error_code ec;
    std::filesystem::create_directories(base, ec);
    if (ec) throw DataError(strf("report: cannot create directory ", dir, ": ", ec.message()));

    std::vector<std::string> written;
    auto emit = [&](const char* name, const std::string& content) {
        const std::filesystem::path p = base / name;
        write_file(p, content);
        written.push_back(p.string());
    };
    emit("metrics.csv", metrics_csv);
    emit("embedding.csv", embedding_csv);
    emit("fig_features.svg", features_svg);
    emit("fig_metrics.svg", metrics_svg);
    if (!in.history.empty()) {
        emit("schedule.csv", schedule_csv);
        emit("fig_schedule.svg", schedule_svg);
    }
    return written;
}

}  // namespace tpl
