// Copyright (C) 2026 wavediff authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "wavediff/training.hpp"

namespace wavediff::train {

namespace {

constexpr char kMagic[4] = {'W', 'D', 'F', '1'};
constexpr uint32_t kVersion = 1;

using json = nlohmann::json;

template <typename T>
void write_le(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw TruncatedError(std::string("checkpoint: truncated while reading ") + what);
    return v;
}

}  // namespace

const TensorEntry* CheckpointData::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    json header;
    header["config"] = data.config_json;
    header["step"] = data.step;
    header["seed"] = std::to_string(data.seed);
    json rng = json::array();
    for (uint64_t word : data.rng_state) rng.push_back(std::to_string(word));
    header["rng"] = std::move(rng);
    json tensors = json::array();
    for (const auto& t : data.tensors) {
        tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    }
    header["tensors"] = std::move(tensors);
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot create " + path);
    out.write(kMagic, 4);
    write_le<uint32_t>(out, kVersion);
    write_le<uint64_t>(out, header_str.size());
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& t : data.tensors) {
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw BadMagicError("checkpoint: bad magic in " + path);
    }
    const auto version = read_le<uint32_t>(in, "version");
    if (version != kVersion) {
        throw VersionError("checkpoint: version " + std::to_string(version) +
                           " unsupported (expected " + std::to_string(kVersion) + ")");
    }
    const auto header_len = read_le<uint64_t>(in, "header length");
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw TruncatedError("checkpoint: truncated header in " + path);

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::parse_error& e) {
        throw TruncatedError("checkpoint: unparseable header in " + path + ": " + e.what());
    }

    CheckpointData data;
    data.version = version;
    data.config_json = header.at("config").get<std::string>();
    data.step = header.at("step").get<int64_t>();
    data.seed = std::stoull(header.at("seed").get<std::string>());
    const auto& rng = header.at("rng");
    for (size_t i = 0; i < 4; ++i) {
        data.rng_state[i] = std::stoull(rng.at(i).get<std::string>());
    }
    for (const auto& t : header.at("tensors")) {
        TensorEntry entry;
        entry.name = t.at("name").get<std::string>();
        entry.shape = t.at("shape").get<nn::Shape>();
        entry.data.resize(static_cast<size_t>(nn::numel(entry.shape)));
        in.read(reinterpret_cast<char*>(entry.data.data()),
                static_cast<std::streamsize>(entry.data.size() * sizeof(float)));
        if (!in) {
            throw TruncatedError("checkpoint: truncated payload at tensor '" + entry.name +
                                 "' in " + path);
        }
        data.tensors.push_back(std::move(entry));
    }
    return data;
}

CheckpointData bundle_state(const nn::ParamRegistry<float>& params, const AdamW& opt,
                            const Ema& ema, const std::string& config_json, int64_t step,
                            uint64_t seed, const std::array<uint64_t, 4>& rng_state) {
    CheckpointData data;
    data.config_json = config_json;
    data.step = step;
    data.seed = seed;
    data.rng_state = rng_state;

    auto& opt_m = const_cast<AdamW&>(opt).moments1();
    auto& opt_v = const_cast<AdamW&>(opt).moments2();
    auto& shadow = const_cast<Ema&>(ema).shadow();
    if (opt_m.size() != params.size() || shadow.size() != params.size()) {
        throw std::logic_error("bundle_state: mismatched optimizer/ema state");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params.items()[i];
        data.tensors.push_back({"param:" + name, p.shape(), p.data()});
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params.items()[i];
        data.tensors.push_back({"adam_m:" + name, p.shape(), opt_m[i]});
        data.tensors.push_back({"adam_v:" + name, p.shape(), opt_v[i]});
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params.items()[i];
        data.tensors.push_back({"ema:" + name, p.shape(), shadow[i]});
    }
    return data;
}

void restore_state(const CheckpointData& data, nn::ParamRegistry<float>& params, AdamW& opt,
                   Ema& ema) {
    auto fetch = [&](const std::string& name, const nn::Shape& shape) -> const TensorEntry& {
        const auto* entry = data.find(name);
        if (!entry) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        if (entry->shape != shape) {
            throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                                     nn::shape_str(entry->shape) + ", model expects " +
                                     nn::shape_str(shape));
        }
        return *entry;
    };

    if (opt.moments1().size() != params.size() || ema.shadow().size() != params.size()) {
        throw std::logic_error("restore_state: mismatched optimizer/ema state");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, p] = params.items()[i];
        p.node()->value = fetch("param:" + name, p.shape()).data;
        opt.moments1()[i] = fetch("adam_m:" + name, p.shape()).data;
        opt.moments2()[i] = fetch("adam_v:" + name, p.shape()).data;
        ema.shadow()[i] = fetch("ema:" + name, p.shape()).data;
    }
    opt.set_step_count(data.step);
}

}  // namespace wavediff::train
