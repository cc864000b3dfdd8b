// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <unordered_map>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

namespace tpl {

namespace {
constexpr int kVersion = 1;

nlohmann::json read_manifest(const std::string& stem) {
    std::ifstream in(stem + ".json");
    if (!in) throw DataError("checkpoint: cannot open " + stem + ".json");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(strf("checkpoint: bad manifest ", stem, ".json: ", e.what()));
    }
    if (manifest.value("format", "") != "tpl-checkpoint") {
        throw DataError("checkpoint: " + stem + ".json is not a tpl-checkpoint manifest");
    }
    if (manifest.value("version", -1) != kVersion) {
        throw DataError(strf("checkpoint: unsupported version in ", stem, ".json"));
    }
    return manifest;
}
}  // namespace

void save_checkpoint(const std::string& stem, const nlohmann::json& meta,
                     const std::vector<ParamRef>& params) {
    nlohmann::json manifest;
    manifest["format"] = "tpl-checkpoint";
    manifest["version"] = kVersion;
    manifest["meta"] = meta;
    nlohmann::json plist = nlohmann::json::array();
    std::size_t offset = 0;
    for (const ParamRef& p : params) {
        plist.push_back({{"name", p.name},
                         {"role", p.role},
                         {"shape", p.tensor->shape},
                         {"offset", offset},
                         {"count", p.tensor->numel()}});
        offset += p.tensor->numel();
    }
    manifest["params"] = std::move(plist);
    manifest["total_values"] = offset;

    std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("checkpoint: cannot write " + stem + ".bin");
    for (const ParamRef& p : params) {
        bin.write(reinterpret_cast<const char*>(p.tensor->values.data()),
                  static_cast<std::streamsize>(p.tensor->numel() * sizeof(double)));
    }
    if (!bin) throw DataError("checkpoint: write failed for " + stem + ".bin");
    bin.close();

    std::ofstream jf(stem + ".json", std::ios::trunc);
    if (!jf) throw DataError("checkpoint: cannot write " + stem + ".json");
    jf << manifest.dump(2) << "\n";
    if (!jf) throw DataError("checkpoint: write failed for " + stem + ".json");
}

nlohmann::json load_checkpoint(const std::string& stem, const std::vector<ParamRef>& params) {
    nlohmann::json manifest = read_manifest(stem);

    struct Entry {
        std::vector<std::size_t> shape;
        std::size_t offset = 0, count = 0;
    };
    std::unordered_map<std::string, Entry> entries;
    std::size_t total = 0;
    for (const auto& e : manifest.at("params")) {
        Entry ent;
        ent.shape = e.at("shape").get<std::vector<std::size_t>>();
        ent.offset = e.at("offset").get<std::size_t>();
        ent.count = e.at("count").get<std::size_t>();
        entries.emplace(e.at("name").get<std::string>(), ent);
        total += ent.count;
    }
    if (entries.size() != params.size()) {
        throw DataError(strf("checkpoint: ", stem, " holds ", entries.size(),
                             " parameters, model expects ", params.size()));
    }

    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw DataError("checkpoint: cannot open " + stem + ".bin");
    bin.seekg(0, std::ios::end);
    const std::size_t actual = static_cast<std::size_t>(bin.tellg());
    const std::size_t expected = total * sizeof(double);
    if (actual != expected) {
        throw DataError(strf("checkpoint: ", stem, ".bin has ", actual, " bytes, expected ",
                             expected));
    }

    for (const ParamRef& p : params) {
        auto it = entries.find(p.name);
        if (it == entries.end()) {
            throw DataError("checkpoint: manifest missing parameter " + p.name);
        }
        const Entry& ent = it->second;
        if (ent.shape != p.tensor->shape || ent.count != p.tensor->numel()) {
            throw ShapeError(strf("checkpoint: parameter ", p.name, " stored as ",
                                  shape_str(ent.shape), ", model expects ",
                                  p.tensor->shape_str()));
        }
        bin.seekg(static_cast<std::streamoff>(ent.offset * sizeof(double)));
        bin.read(reinterpret_cast<char*>(p.tensor->values.data()),
                 static_cast<std::streamsize>(ent.count * sizeof(double)));
        if (!bin) throw DataError("checkpoint: truncated read for parameter " + p.name);
        if (!p.tensor->all_finite()) {
            throw NumericError("checkpoint: non-finite values in parameter " + p.name);
        }
        p.tensor->grad.reset();
    }
    return manifest.at("meta");
}

nlohmann::json peek_checkpoint_meta(const std::string& stem) {
    return read_manifest(stem).at("meta");
}

}  // namespace tpl
