#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bioenv/json_codec.hpp"
#include "bioenv/model.hpp"
#include "bioenv/pipeline.hpp"
#include "bioenv/train.hpp"

namespace bioenv {

// ---------------------------------------------------------------------------
// Container framing, shared by model files and labeled-dataset files:
//
//   magic "BENV" | version byte 1 | u32 LE manifest length | manifest JSON |
//   contiguous little-endian float32 tensor payloads | u32 LE CRC32 of
//   everything before it
//
// Tensor byte offsets in the manifest are relative to the payload start.
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 4> kContainerMagic = {'B', 'E', 'N', 'V'};
inline constexpr std::uint8_t kContainerVersion = 1;

class BadMagicError : public IoError {
public:
    using IoError::IoError;
};
class VersionMismatchError : public IoError {
public:
    using IoError::IoError;
};
class TruncatedFileError : public IoError {
public:
    using IoError::IoError;
};
class ChecksumError : public IoError {
public:
    using IoError::IoError;
};

// --- CRC32 (IEEE, reflected, as used by zip/png) ----------------------------

inline std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    crc = ~crc;
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
    return ~crc;
}

inline std::uint32_t crc32_of(const std::string& bytes) {
    return crc32_update(0, bytes.data(), bytes.size());
}

namespace detail {

inline void append_u32le(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xffu));
    buf.push_back(static_cast<char>((v >> 8) & 0xffu));
    buf.push_back(static_cast<char>((v >> 16) & 0xffu));
    buf.push_back(static_cast<char>((v >> 24) & 0xffu));
}

inline std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void append_f32le(std::string& buf, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));
    append_u32le(buf, bits);
}

inline float read_f32le(const unsigned char* p) {
    const std::uint32_t bits = read_u32le(p);
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

/// Row-major flatten of an Eigen matrix/vector into the payload.
template <typename Tensor>
void append_tensor(std::string& payload, const Tensor& t) {
    for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c)
            append_f32le(payload, static_cast<float>(t(r, c)));
}

template <typename Tensor>
void read_tensor(const unsigned char* payload, std::size_t payload_size, std::size_t offset,
                 Tensor& t, const std::string& name) {
    const std::size_t need = static_cast<std::size_t>(t.size()) * 4;
    if (offset + need > payload_size)
        throw TruncatedFileError("truncated tensor data for '" + name + "'");
    const unsigned char* p = payload + offset;
    for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c, p += 4)
            t(r, c) = static_cast<typename Tensor::Scalar>(read_f32le(p));
}

struct ParsedContainer {
    Json manifest;
    std::vector<unsigned char> payload;
    std::string fingerprint; // hex of the trailing CRC32
};

inline std::string fingerprint_hex(std::uint32_t crc) {
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", crc);
    return std::string(buf);
}

inline std::string finish_container(const Json& manifest, const std::string& payload,
                                    std::string* fingerprint_out) {
    std::string bytes(kContainerMagic.begin(), kContainerMagic.end());
    bytes.push_back(static_cast<char>(kContainerVersion));
    const std::string manifest_text = manifest.dump();
    append_u32le(bytes, static_cast<std::uint32_t>(manifest_text.size()));
    bytes += manifest_text;
    bytes += payload;
    const std::uint32_t crc = crc32_of(bytes);
    append_u32le(bytes, crc);
    if (fingerprint_out) *fingerprint_out = fingerprint_hex(crc);
    return bytes;
}

inline ParsedContainer parse_container(const std::vector<unsigned char>& bytes,
                                       const std::string& origin) {
    if (bytes.size() < 4 ||
        std::memcmp(bytes.data(), kContainerMagic.data(), 4) != 0)
        throw BadMagicError("bad magic: not a BENV container: " + origin);
    if (bytes.size() < 5) throw TruncatedFileError("truncated header: " + origin);
    if (bytes[4] != kContainerVersion)
        throw VersionMismatchError("unsupported container version " +
                                   std::to_string(int(bytes[4])) + ": " + origin);
    if (bytes.size() < 9) throw TruncatedFileError("truncated header: " + origin);
    const std::uint32_t manifest_len = read_u32le(bytes.data() + 5);
    const std::size_t manifest_end = 9 + static_cast<std::size_t>(manifest_len);
    if (bytes.size() < manifest_end + 4)
        throw TruncatedFileError("truncated manifest: " + origin);

    ParsedContainer out;
    try {
        out.manifest = Json::parse(bytes.begin() + 9, bytes.begin() + manifest_end);
    } catch (const Json::parse_error& e) {
        throw IoError("unreadable manifest in " + origin + ": " + e.what());
    }
    out.payload.assign(bytes.begin() + manifest_end, bytes.end() - 4);

    const std::uint32_t stored = read_u32le(bytes.data() + bytes.size() - 4);
    const std::uint32_t actual = crc32_update(0, bytes.data(), bytes.size() - 4);
    if (stored != actual)
        throw ChecksumError("checksum failure in " + origin + " (stored " +
                            fingerprint_hex(stored) + ", computed " + fingerprint_hex(actual) + ")");
    out.fingerprint = fingerprint_hex(stored);
    return out;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace detail

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// Semantic tensor shapes as written to the manifest. The conv kernel is
/// stored as [kernel, features, filters] even though it lives in memory as a
/// (kernel*features) x filters matrix; the row-major flatten orders match.
inline Json model_tensor_shape(const ModelConfig& cfg, std::string_view name) {
    if (name == "conv.kernel") return Json::array({cfg.conv_kernel, cfg.input_features, cfg.conv_filters});
    if (name == "conv.bias") return Json::array({cfg.conv_filters});
    if (name == "lstm.W") return Json::array({cfg.conv_filters, 4 * cfg.lstm_units});
    if (name == "lstm.U") return Json::array({cfg.lstm_units, 4 * cfg.lstm_units});
    if (name == "lstm.bias") return Json::array({4 * cfg.lstm_units});
    if (name == "dense.W") return Json::array({cfg.lstm_units, cfg.num_classes});
    if (name == "dense.bias") return Json::array({cfg.num_classes});
    throw IoError("unknown tensor name: " + std::string(name));
}

namespace detail {

inline std::string build_model_container(const ModelBundle& bundle, std::string* fingerprint) {
    Json manifest;
    manifest["kind"] = "model";
    manifest["config"] = to_json(bundle.config);
    manifest["labels"] = bundle.label_names;
    Json registry = Json::array();
    std::string payload;
    bundle.params.for_each_tensor([&](const char* name, const auto& tensor) {
        Json entry;
        entry["name"] = name;
        entry["shape"] = model_tensor_shape(bundle.config, name);
        entry["offset"] = payload.size();
        registry.push_back(std::move(entry));
        append_tensor(payload, tensor);
    });
    manifest["tensors"] = std::move(registry);
    return finish_container(manifest, payload, fingerprint);
}

} // namespace detail

/// Writes the bundle and returns the file fingerprint (hex of the trailing
/// CRC32).
inline std::string save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
    std::string fingerprint;
    detail::write_file_bytes(path, detail::build_model_container(bundle, &fingerprint));
    return fingerprint;
}

struct LoadedModel {
    ModelBundle bundle;
    std::string fingerprint;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ParsedContainer container = detail::parse_container(bytes, path.string());
    const Json& manifest = container.manifest;
    if (manifest.value("kind", "") != "model")
        throw IoError("not a model container: " + path.string());

    LoadedModel out;
    out.fingerprint = container.fingerprint;
    out.bundle.config = model_config_from_json(manifest.at("config"));
    out.bundle.label_names = manifest.at("labels").get<std::vector<std::string>>();
    if (out.bundle.label_names.size() != static_cast<std::size_t>(out.bundle.config.num_classes))
        throw IoError("label vocabulary does not match num_classes: " + path.string());
    out.bundle.params.allocate_zero(out.bundle.config);

    std::map<std::string, std::size_t> offsets;
    for (const Json& entry : manifest.at("tensors"))
        offsets[entry.at("name").get<std::string>()] = entry.at("offset").get<std::size_t>();
    out.bundle.params.for_each_tensor([&](const char* name, auto& tensor) {
        auto it = offsets.find(name);
        if (it == offsets.end()) throw IoError("missing tensor '" + std::string(name) + "' in " + path.string());
        detail::read_tensor(container.payload.data(), container.payload.size(), it->second,
                            tensor, name);
    });
    return out;
}

/// Fingerprint a bundle without writing it anywhere.
inline std::string model_fingerprint(const ModelBundle& bundle) {
    std::string fingerprint;
    detail::build_model_container(bundle, &fingerprint);
    return fingerprint;
}

// ---------------------------------------------------------------------------
// Labeled-dataset files (same framing, kind = "dataset")
// ---------------------------------------------------------------------------

inline void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& path) {
    Json manifest;
    manifest["kind"] = "dataset";
    manifest["window_steps"] = kWindowSteps;
    manifest["features"] = kNumFeatures;
    manifest["subjects"] = dataset.subjects;

    std::map<std::string, std::size_t> subject_index;
    for (std::size_t i = 0; i < dataset.subjects.size(); ++i)
        subject_index[dataset.subjects[i]] = i;

    Json windows = Json::array();
    for (const FeatureWindow& w : dataset.windows) {
        auto it = subject_index.find(w.subject_id);
        if (it == subject_index.end())
            throw IoError("window subject '" + w.subject_id + "' missing from subject list");
        windows.push_back(Json{{"s", it->second}, {"i", w.start_index},
                               {"y", static_cast<int>(w.label)}});
    }
    manifest["windows"] = std::move(windows);

    Json histogram;
    const auto h = dataset.label_histogram();
    for (int c = 0; c < kNumRiskLabels; ++c)
        histogram[std::string(kRiskLabelNames[c])] = h[static_cast<std::size_t>(c)];
    manifest["label_histogram"] = std::move(histogram);

    std::string payload;
    for (const FeatureWindow& w : dataset.windows)
        for (float v : w.values) detail::append_f32le(payload, v);
    manifest["tensors"] = Json::array({Json{
        {"name", "windows"},
        {"shape", Json::array({dataset.windows.size(), kWindowSteps, kNumFeatures})},
        {"offset", 0}}});

    detail::write_file_bytes(path, detail::finish_container(manifest, payload, nullptr));
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ParsedContainer container = detail::parse_container(bytes, path.string());
    const Json& manifest = container.manifest;
    if (manifest.value("kind", "") != "dataset")
        throw IoError("not a dataset container: " + path.string());
    if (manifest.at("window_steps").get<int>() != kWindowSteps ||
        manifest.at("features").get<int>() != kNumFeatures)
        throw IoError("dataset window shape mismatch: " + path.string());

    LabeledDataset out;
    out.subjects = manifest.at("subjects").get<std::vector<std::string>>();
    const Json& windows = manifest.at("windows");
    const std::size_t count = windows.size();
    constexpr std::size_t window_bytes = kWindowSteps * kNumFeatures * 4;
    if (container.payload.size() < count * window_bytes)
        throw TruncatedFileError("truncated tensor data for 'windows'");

    out.windows.reserve(count);
    const unsigned char* p = container.payload.data();
    for (std::size_t i = 0; i < count; ++i) {
        const Json& meta = windows[i];
        FeatureWindow w;
        const std::size_t subject = meta.at("s").get<std::size_t>();
        if (subject >= out.subjects.size())
            throw IoError("window subject index out of range: " + path.string());
        w.subject_id = out.subjects[subject];
        w.start_index = meta.at("i").get<std::size_t>();
        const int y = meta.at("y").get<int>();
        if (y < 0 || y >= kNumRiskLabels)
            throw IoError("window label out of range: " + path.string());
        w.label = static_cast<RiskLabel>(y);
        for (std::size_t j = 0; j < w.values.size(); ++j, p += 4)
            w.values[j] = detail::read_f32le(p);
        out.windows.push_back(std::move(w));
    }
    return out;
}

} // namespace bioenv
