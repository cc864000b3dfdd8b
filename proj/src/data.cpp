// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <utility>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset format is little-endian; big-endian hosts unsupported");

namespace tpl {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'L', 'D'};
constexpr std::uint8_t kVersion = 1;
constexpr double kTwoPi = 6.283185307179586476925286766559;

void validate_config(const DatasetConfig& cfg) {
    if (cfg.classes < 2 || cfg.classes > 0xFFFF) {
        throw UsageError(strf("dataset: classes must be in [2, 65535], got ", cfg.classes));
    }
    if (cfg.domains < 3 || cfg.domains > 0xFFFF) {
        throw UsageError(strf("dataset: domains must be in [3, 65535], got ", cfg.domains));
    }
    if (cfg.per_cell < 8) {
        throw UsageError(strf("dataset: per_cell must be >= 8, got ", cfg.per_cell));
    }
    if (cfg.image_size < 8 || cfg.channels == 0) {
        throw UsageError("dataset: image_size must be >= 8 and channels positive");
    }
}

std::string hash_config(const DatasetConfig& cfg) {
    std::uint64_t s = 0x7450'4c44'0000'0000ULL;  // "TPLD" tag
    for (std::uint64_t v : {static_cast<std::uint64_t>(cfg.classes),
                            static_cast<std::uint64_t>(cfg.domains),
                            static_cast<std::uint64_t>(cfg.per_cell),
                            static_cast<std::uint64_t>(cfg.image_size),
                            static_cast<std::uint64_t>(cfg.channels), cfg.seed,
                            static_cast<std::uint64_t>(kVersion)}) {
        s ^= v;
        splitmix64(s);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(splitmix64(s)));
    return buf;
}

// ---------------------------------------------------------------------------
// Domain style: fixed per domain, drawn from a palette plus seeded jitter so
// any number of domains yields strong, well-separated styles.

struct DomainStyle {
    double gain[3];
    double offset[3];
    int texture = 0;        // 0 flat, 1 horizontal, 2 vertical, 3 sinusoid grid
    double fg_level = 0.9;  // alternating light/dark glyph polarity per domain
    double bg_base = 0.25;
    double bg_amp = 0.35;
    double freq_x = 3.0, freq_y = 3.0;
    double phase_x = 0.0, phase_y = 0.0;
    double noise_sigma = 0.05;
    int blur_radius = 0;
    double glyph_zoom = 1.0;  // per-domain magnification (camera-distance gap)
};

DomainStyle domain_style(const DatasetConfig& cfg, std::size_t domain) {
    static constexpr double kGain[8][3] = {
        {1.00, 0.55, 0.50}, {0.50, 1.00, 0.55}, {0.50, 0.60, 1.00}, {1.00, 0.95, 0.45},
        {0.90, 0.50, 0.95}, {0.45, 0.95, 0.95}, {1.00, 0.72, 0.45}, {0.70, 0.70, 0.70}};
    static constexpr double kSigma[8] = {0.03, 0.09, 0.05, 0.12, 0.04, 0.10, 0.06, 0.08};
    static constexpr int kBlur[8] = {0, 1, 0, 2, 1, 0, 2, 0};
    // Mild per-domain magnification: enough that absolute glyph size carries
    // domain flavor, small against the class octave ratio (1.3) so class
    // boundaries stay stable across domains.
    static constexpr double kZoom[8] = {1.00, 1.03, 0.98, 1.02, 0.99, 1.03, 0.98, 1.01};

    Rng rng = Rng(cfg.seed).fork(0, domain);  // class key 0 never used by cells
    const std::size_t k = (domain - 1) % 8;
    DomainStyle st;
    for (int c = 0; c < 3; ++c) {
        st.gain[c] = kGain[k][c] * rng.uniform(0.9, 1.1);
        st.offset[c] = rng.uniform(-0.05, 0.08);
    }
    st.texture = static_cast<int>((domain - 1) % 4);
    if (k % 2 == 0) {  // light glyph on dark background
        st.fg_level = rng.uniform(0.85, 0.95);
        st.bg_base = rng.uniform(0.15, 0.3);
    } else {           // dark glyph on light background
        st.fg_level = rng.uniform(0.05, 0.15);
        st.bg_base = rng.uniform(0.6, 0.75);
    }
    st.bg_amp = rng.uniform(0.3, 0.5);
    st.freq_x = 2.0 + static_cast<double>(rng.uniform_int(4));
    st.freq_y = 2.0 + static_cast<double>(rng.uniform_int(4));
    st.phase_x = rng.uniform();
    st.phase_y = rng.uniform();
    st.noise_sigma = kSigma[k] + rng.uniform(-0.01, 0.01);
    st.blur_radius = kBlur[k];
    st.glyph_zoom = kZoom[k] + rng.uniform(-0.01, 0.01);
    return st;
}

// ---------------------------------------------------------------------------
// Glyphs: class identity as a shape/frequency pattern, independent of style.

bool glyph_hit(std::size_t cls, double dx, double dy, double s) {
    switch ((cls - 1) % 8) {
        case 0:  // disk
            return std::hypot(dx, dy) < 0.80 * s;
        case 1:  // ring
        {
            const double r = std::hypot(dx, dy);
            return r > 0.45 * s && r < 0.88 * s;
        }
        case 2:  // plus
            return (std::abs(dx) < 0.28 * s && std::abs(dy) < 0.95 * s) ||
                   (std::abs(dy) < 0.28 * s && std::abs(dx) < 0.95 * s);
        case 3:  // diagonal cross
        {
            const double u = (dx + dy) * 0.7071067811865476;
            const double v = (dx - dy) * 0.7071067811865476;
            return (std::abs(u) < 0.26 * s && std::abs(v) < 0.95 * s) ||
                   (std::abs(v) < 0.26 * s && std::abs(u) < 0.95 * s);
        }
        case 4:  // horizontal stripes
            return std::abs(dx) < 0.9 * s && std::abs(dy) < 0.9 * s &&
                   std::sin(kTwoPi * dy / (0.6 * s)) > 0.0;
        case 5:  // vertical stripes
            return std::abs(dx) < 0.9 * s && std::abs(dy) < 0.9 * s &&
                   std::sin(kTwoPi * dx / (0.6 * s)) > 0.0;
        case 6:  // upward triangle
            return dy > -0.85 * s && dy < 0.75 * s &&
                   std::abs(dx) < 0.9 * s * (dy + 0.85 * s) / (1.6 * s);
        case 7:  // checkerboard
        {
            if (std::abs(dx) >= 0.9 * s || std::abs(dy) >= 0.9 * s) return false;
            const int ix = static_cast<int>(std::floor((dx + 0.9 * s) / (0.45 * s)));
            const int iy = static_cast<int>(std::floor((dy + 0.9 * s) / (0.45 * s)));
            return (ix + iy) % 2 == 0;
        }
    }
    return false;
}

// 2x2 supersampled coverage in [0, 1]. Higher class octaves shrink the glyph
// so class counts beyond the 8 base shapes stay distinguishable.
double glyph_coverage(std::size_t cls, double px, double py, double cx, double cy,
                      double s) {
    const double scale = s / (1.0 + 0.3 * static_cast<double>((cls - 1) / 8));
    int hits = 0;
    for (double ox : {0.25, 0.75}) {
        for (double oy : {0.25, 0.75}) {
            hits += glyph_hit(cls, px + ox - cx, py + oy - cy, scale) ? 1 : 0;
        }
    }
    return hits / 4.0;
}

double background(const DomainStyle& st, double base, std::size_t w, std::size_t x,
                  std::size_t y, double phase_x, double phase_y) {
    const double fx = static_cast<double>(x) / static_cast<double>(w - 1);
    const double fy = static_cast<double>(y) / static_cast<double>(w - 1);
    switch (st.texture) {
        case 1: return base + st.bg_amp * (fx - 0.5);
        case 2: return base + st.bg_amp * (fy - 0.5);
        case 3:
            return base + 0.5 * st.bg_amp * std::sin(kTwoPi * (st.freq_x * fx + phase_x)) *
                              std::sin(kTwoPi * (st.freq_y * fy + phase_y));
        default: return base;
    }
}

void box_blur(std::vector<double>& img, std::size_t w, std::size_t ch, int radius) {
    if (radius <= 0) return;
    std::vector<double> tmp(img.size());
    auto at = [&](std::vector<double>& buf, std::size_t y, std::size_t x,
                  std::size_t c) -> double& { return buf[(y * w + x) * ch + c]; };
    for (std::size_t y = 0; y < w; ++y) {       // horizontal pass
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t lo = x >= static_cast<std::size_t>(radius) ? x - radius : 0;
            const std::size_t hi = std::min(w - 1, x + radius);
            for (std::size_t c = 0; c < ch; ++c) {
                double sum = 0.0;
                for (std::size_t k = lo; k <= hi; ++k) sum += at(img, y, k, c);
                at(tmp, y, x, c) = sum / static_cast<double>(hi - lo + 1);
            }
        }
    }
    for (std::size_t y = 0; y < w; ++y) {       // vertical pass
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t lo = y >= static_cast<std::size_t>(radius) ? y - radius : 0;
            const std::size_t hi = std::min(w - 1, y + radius);
            for (std::size_t c = 0; c < ch; ++c) {
                double sum = 0.0;
                for (std::size_t k = lo; k <= hi; ++k) sum += at(tmp, k, x, c);
                at(img, y, x, c) = sum / static_cast<double>(hi - lo + 1);
            }
        }
    }
}

void render_image(const DatasetConfig& cfg, const DomainStyle& st, std::size_t cls,
                  Rng& rng, float* out) {
    const std::size_t w = cfg.image_size, ch = cfg.channels;
    const double wd = static_cast<double>(w);
    // Jitter is kept small enough that raw-pixel class centroids stay sharp
    // and well inside the domain magnification spread, so absolute glyph size
    // is informative about the domain, not washed out by sampling noise.
    const double cx = rng.uniform(0.46, 0.54) * wd;
    const double cy = rng.uniform(0.46, 0.54) * wd;
    const double s = rng.uniform(0.27, 0.31) * wd * st.glyph_zoom;
    const double fg = st.fg_level + rng.uniform(-0.05, 0.05);
    const double base = st.bg_base + rng.uniform(-0.03, 0.03);
    const double phase_x = st.phase_x + rng.uniform(-0.05, 0.05);
    const double phase_y = st.phase_y + rng.uniform(-0.05, 0.05);

    std::vector<double> img(w * w * ch);
    for (std::size_t y = 0; y < w; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double m = glyph_coverage(cls, static_cast<double>(x),
                                            static_cast<double>(y), cx, cy, s);
            const double bg = background(st, base, w, x, y, phase_x, phase_y);
            const double gray = bg * (1.0 - m) + fg * m;
            for (std::size_t c = 0; c < ch; ++c) {
                img[(y * w + x) * ch + c] = st.gain[c % 3] * gray + st.offset[c % 3];
            }
        }
    }
    // Blur radii are specified at a 32-pixel reference resolution; scale so a
    // domain's blurriness is a constant fraction of the image at any size.
    box_blur(img, w, ch, static_cast<int>((st.blur_radius * w) / 32));
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = img[i] + st.noise_sigma * rng.normal();
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

// Deterministic Fisher-Yates using the supplied stream.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    }
}

}  // namespace

std::map<std::pair<std::size_t, std::size_t>, std::size_t> DomainDataset::cell_counts()
    const {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
    for (std::size_t i = 0; i < count(); ++i) ++counts[{labels[i], domains[i]}];
    return counts;
}

DomainDataset generate_synthetic(const DatasetConfig& cfg) {
    validate_config(cfg);
    DomainDataset ds;
    ds.cfg = cfg;
    ds.config_hash = hash_config(cfg);
    const std::size_t n = cfg.classes * cfg.domains * cfg.per_cell;
    ds.images.resize(n * cfg.image_size * cfg.image_size * cfg.channels);
    ds.labels.reserve(n);
    ds.domains.reserve(n);

    std::vector<DomainStyle> styles;
    for (std::size_t m = 1; m <= cfg.domains; ++m) styles.push_back(domain_style(cfg, m));

    const Rng root(cfg.seed);
    std::size_t row = 0;
    for (std::size_t c = 1; c <= cfg.classes; ++c) {
        for (std::size_t m = 1; m <= cfg.domains; ++m) {
            Rng cell = root.fork(c, m);  // independent stream per cell
            for (std::size_t i = 0; i < cfg.per_cell; ++i, ++row) {
                render_image(cfg, styles[m - 1], c, cell,
                             ds.images.data() + row * ds.pixels());
                ds.labels.push_back(static_cast<std::uint16_t>(c));
                ds.domains.push_back(static_cast<std::uint16_t>(m));
            }
        }
    }
    ds.oracle = run_pixel_oracle(ds);
    return ds;
}

Tensor image_as_tensor(const DomainDataset& ds, std::size_t index) {
    if (index >= ds.count()) {
        throw DataError(strf("dataset: image index ", index, " out of range ", ds.count()));
    }
    Tensor t = Tensor::zeros({ds.cfg.image_size, ds.cfg.image_size, ds.cfg.channels});
    const float* src = ds.images.data() + index * ds.pixels();
    for (std::size_t i = 0; i < t.numel(); ++i) t.values[i] = static_cast<double>(src[i]);
    return t;
}

OracleReport run_pixel_oracle(const DomainDataset& ds) {
    const std::size_t M = ds.cfg.domains, C = ds.cfg.classes, pix = ds.pixels();
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < ds.count(); ++i) cells[{ds.labels[i], ds.domains[i]}].push_back(i);

    // Per-domain centroids on the first half of each cell.
    std::vector<std::vector<double>> centroid(M * C);
    std::map<std::size_t, std::vector<std::size_t>> test_by_domain;
    for (auto& [key, idx] : cells) {
        const auto [cls, dom] = key;
        if (idx.size() < 2) {
            throw DataError(strf("pixel oracle: cell class ", cls, " domain ", dom,
                                 " needs >= 2 samples, has ", idx.size()));
        }
        const std::size_t fit_n = idx.size() / 2;
        std::vector<double>& mu = centroid[(dom - 1) * C + (cls - 1)];
        mu.assign(pix, 0.0);
        for (std::size_t k = 0; k < fit_n; ++k) {
            const float* p = ds.images.data() + idx[k] * pix;
            for (std::size_t j = 0; j < pix; ++j) mu[j] += p[j];
        }
        for (double& v : mu) v /= static_cast<double>(fit_n);
        for (std::size_t k = fit_n; k < idx.size(); ++k) {
            test_by_domain[dom].push_back(idx[k]);
        }
    }

    auto classify = [&](std::size_t fit_dom, std::size_t img_idx) {
        const float* p = ds.images.data() + img_idx * pix;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_cls = 1;
        for (std::size_t c = 1; c <= C; ++c) {
            const std::vector<double>& mu = centroid[(fit_dom - 1) * C + (c - 1)];
            double dist = 0.0;
            for (std::size_t j = 0; j < pix; ++j) {
                const double diff = p[j] - mu[j];
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_cls = c;
            }
        }
        return best_cls;
    };
    auto accuracy = [&](std::size_t fit_dom, std::size_t eval_dom) {
        const auto& idx = test_by_domain.at(eval_dom);
        std::size_t hit = 0;
        for (std::size_t i : idx) hit += classify(fit_dom, i) == ds.labels[i] ? 1 : 0;
        return static_cast<double>(hit) / static_cast<double>(idx.size());
    };

    OracleReport rep;
    rep.within.resize(M);
    rep.cross_mean.resize(M);
    rep.min_within = 1.0;
    double degr = 0.0;
    for (std::size_t m = 1; m <= M; ++m) {
        rep.within[m - 1] = accuracy(m, m);
        double cross = 0.0;
        for (std::size_t m2 = 1; m2 <= M; ++m2) {
            if (m2 != m) cross += accuracy(m, m2);
        }
        rep.cross_mean[m - 1] = cross / static_cast<double>(M - 1);
        rep.min_within = std::min(rep.min_within, rep.within[m - 1]);
        degr += rep.within[m - 1] - rep.cross_mean[m - 1];
    }
    rep.mean_degradation = degr / static_cast<double>(M);
    return rep;
}

void save_dataset(const std::string& stem, const DomainDataset& ds) {
    nlohmann::json manifest;
    manifest["format"] = "tpld";
    manifest["version"] = kVersion;
    manifest["config"] = {{"classes", ds.cfg.classes},     {"domains", ds.cfg.domains},
                          {"per_cell", ds.cfg.per_cell},   {"image_size", ds.cfg.image_size},
                          {"channels", ds.cfg.channels},   {"seed", ds.cfg.seed}};
    manifest["config_hash"] = ds.config_hash;
    manifest["count"] = ds.count();
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [key, n] : ds.cell_counts()) {
        cells.push_back({{"class", key.first}, {"domain", key.second}, {"count", n}});
    }
    manifest["cells"] = std::move(cells);
    manifest["oracle"] = {{"within", ds.oracle.within},
                          {"cross_mean", ds.oracle.cross_mean},
                          {"min_within", ds.oracle.min_within},
                          {"mean_degradation", ds.oracle.mean_degradation}};

    std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("dataset: cannot write " + stem + ".bin");
    bin.write(kMagic, 4);
    bin.put(static_cast<char>(kVersion));
    bin.write(reinterpret_cast<const char*>(ds.images.data()),
              static_cast<std::streamsize>(ds.images.size() * sizeof(float)));
    bin.write(reinterpret_cast<const char*>(ds.labels.data()),
              static_cast<std::streamsize>(ds.labels.size() * sizeof(std::uint16_t)));
    bin.write(reinterpret_cast<const char*>(ds.domains.data()),
              static_cast<std::streamsize>(ds.domains.size() * sizeof(std::uint16_t)));
    if (!bin) throw DataError("dataset: write failed for " + stem + ".bin");
    bin.close();

    std::ofstream jf(stem + ".json", std::ios::trunc);
    if (!jf) throw DataError("dataset: cannot write " + stem + ".json");
    jf << manifest.dump(2) << "\n";
    if (!jf) throw DataError("dataset: write failed for " + stem + ".json");
}

DomainDataset load_dataset(const std::string& stem) {
    std::ifstream jf(stem + ".json");
    if (!jf) throw DataError("dataset: cannot open " + stem + ".json");
    nlohmann::json manifest;
    try {
        jf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(strf("dataset: bad manifest ", stem, ".json: ", e.what()));
    }
    if (manifest.value("format", "") != "tpld") {
        throw DataError("dataset: " + stem + ".json is not a tpld manifest");
    }
    if (manifest.value("version", -1) != kVersion) {
        throw DataError(strf("dataset: unsupported version in ", stem, ".json"));
    }

    DomainDataset ds;
    const auto& jc = manifest.at("config");
    ds.cfg.classes = jc.at("classes").get<std::size_t>();
    ds.cfg.domains = jc.at("domains").get<std::size_t>();
    ds.cfg.per_cell = jc.at("per_cell").get<std::size_t>();
    ds.cfg.image_size = jc.at("image_size").get<std::size_t>();
    ds.cfg.channels = jc.at("channels").get<std::size_t>();
    ds.cfg.seed = jc.at("seed").get<std::uint64_t>();
    ds.config_hash = manifest.at("config_hash").get<std::string>();
    const auto& jo = manifest.at("oracle");
    ds.oracle.within = jo.at("within").get<std::vector<double>>();
    ds.oracle.cross_mean = jo.at("cross_mean").get<std::vector<double>>();
    ds.oracle.min_within = jo.at("min_within").get<double>();
    ds.oracle.mean_degradation = jo.at("mean_degradation").get<double>();

    const std::size_t n = manifest.at("count").get<std::size_t>();
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw DataError("dataset: cannot open " + stem + ".bin");
    bin.seekg(0, std::ios::end);
    const std::size_t actual = static_cast<std::size_t>(bin.tellg());
    const std::size_t pix = ds.cfg.image_size * ds.cfg.image_size * ds.cfg.channels;
    const std::size_t expected = 5 + n * pix * sizeof(float) + 2 * n * sizeof(std::uint16_t);
    if (actual != expected) {
        throw DataError(strf("dataset: ", stem, ".bin has ", actual, " bytes, expected ",
                             expected));
    }
    bin.seekg(0);
    char magic[4];
    bin.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("dataset: " + stem + ".bin has bad magic bytes");
    }
    if (bin.get() != kVersion) {
        throw DataError("dataset: " + stem + ".bin has unsupported version");
    }
    ds.images.resize(n * pix);
    ds.labels.resize(n);
    ds.domains.resize(n);
    bin.read(reinterpret_cast<char*>(ds.images.data()),
             static_cast<std::streamsize>(ds.images.size() * sizeof(float)));
    bin.read(reinterpret_cast<char*>(ds.labels.data()),
             static_cast<std::streamsize>(n * sizeof(std::uint16_t)));
    bin.read(reinterpret_cast<char*>(ds.domains.data()),
             static_cast<std::streamsize>(n * sizeof(std::uint16_t)));
    if (!bin) throw DataError("dataset: truncated read from " + stem + ".bin");

    for (std::size_t i = 0; i < n; ++i) {
        if (ds.labels[i] == 0 || ds.labels[i] > ds.cfg.classes) {
            throw DataError(strf("dataset: label ", ds.labels[i], " at row ", i,
                                 " outside [1, ", ds.cfg.classes, "]"));
        }
        if (ds.domains[i] == 0 || ds.domains[i] > ds.cfg.domains) {
            throw DataError(strf("dataset: domain ", ds.domains[i], " at row ", i,
                                 " outside [1, ", ds.cfg.domains, "]"));
        }
    }
    for (float v : ds.images) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw DataError("dataset: image values must lie in [0, 1]");
        }
    }
    // Manifest cell counts must equal the buffer's actual counts.
    auto actual_cells = ds.cell_counts();
    std::size_t manifest_cells = 0;
    for (const auto& cell : manifest.at("cells")) {
        const std::size_t cls = cell.at("class").get<std::size_t>();
        const std::size_t dom = cell.at("domain").get<std::size_t>();
        const std::size_t cnt = cell.at("count").get<std::size_t>();
        auto it = actual_cells.find({cls, dom});
        if (it == actual_cells.end() || it->second != cnt) {
            throw DataError(strf("dataset: manifest count for class ", cls, " domain ", dom,
                                 " does not match buffer"));
        }
        ++manifest_cells;
    }
    if (manifest_cells != actual_cells.size()) {
        throw DataError("dataset: buffer holds cells missing from the manifest");
    }
    return ds;
}

std::vector<std::size_t> SplitPlan::all_train() const {
    std::vector<std::size_t> out;
    for (const auto& [dom, lists] : sources) {
        (void)dom;
        out.insert(out.end(), lists.train.begin(), lists.train.end());
    }
    return out;
}

std::vector<std::size_t> SplitPlan::all_val() const {
    std::vector<std::size_t> out;
    for (const auto& [dom, lists] : sources) {
        (void)dom;
        out.insert(out.end(), lists.val.begin(), lists.val.end());
    }
    return out;
}

std::vector<std::size_t> SplitPlan::target_indices(const DomainDataset& ds) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.count(); ++i) {
        if (ds.domains[i] == target_domain) out.push_back(i);
    }
    return out;
}

SplitPlan make_splits(const DomainDataset& ds, std::size_t target, double val_fraction,
                      std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 0.5)) {
        throw UsageError(strf("splits: val_fraction must lie in (0, 0.5), got ",
                              val_fraction));
    }
    bool target_seen = false;
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < ds.count(); ++i) {
        if (ds.domains[i] == target) {
            target_seen = true;
            continue;
        }
        cells[{ds.domains[i], ds.labels[i]}].push_back(i);
    }
    if (!target_seen) {
        throw DataError(strf("splits: target domain ", target, " absent from dataset"));
    }
    if (cells.empty()) {
        throw DataError("splits: no source-domain samples outside the target");
    }

    SplitPlan plan;
    plan.target_domain = target;
    plan.val_fraction = val_fraction;
    const Rng root(seed);
    for (auto& [key, idx] : cells) {
        const auto [dom, cls] = key;
        Rng rng = root.fork(dom, cls);
        shuffle_indices(idx, rng);
        const std::size_t train_n = static_cast<std::size_t>(
            std::floor((1.0 - val_fraction) * static_cast<double>(idx.size())));
        SplitLists& lists = plan.sources[dom];
        lists.train.insert(lists.train.end(), idx.begin(), idx.begin() + train_n);
        lists.val.insert(lists.val.end(), idx.begin() + train_n, idx.end());
    }
    return plan;
}

}  // namespace tpl
