#include "great/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "great/error.hpp"

namespace great {

namespace {

constexpr std::string_view kMagic = "GREATCKP";

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::string_view in, std::size_t at) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

}  // namespace

nlohmann::json schema_to_json(const Schema& schema) {
    nlohmann::json features = nlohmann::json::array();
    for (std::size_t j = 0; j < schema.size(); ++j) {
        nlohmann::json f = {{"name", schema.features[j].name}, {"kind", std::string(to_string(schema.features[j].kind))}};
        if (schema.is_numeric(j))
            f["range"] = {schema.range[j].first, schema.range[j].second};
        else
            f["support"] = schema.support[j];
        features.push_back(std::move(f));
    }
    return {{"features", features}};
}

Schema schema_from_json(const nlohmann::json& j) {
    Schema s;
    for (const auto& f : j.at("features")) {
        const auto kind = f.at("kind").get<std::string>();
        if (kind != "numeric" && kind != "categorical") throw Error(ErrorCode::InvalidSpec, "unknown feature kind " + kind);
        const bool numeric = kind == "numeric";
        s.features.push_back({f.at("name").get<std::string>(), numeric ? FeatureKind::Numeric : FeatureKind::Categorical});
        if (numeric) {
            s.range.emplace_back(f.at("range").at(0).get<double>(), f.at("range").at(1).get<double>());
            s.support.emplace_back();
        } else {
            s.support.push_back(f.at("support").get<std::vector<std::string>>());
            s.range.emplace_back(0.0, 0.0);
        }
    }
    return s;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t tensor_bytes = 0;
    for (const auto& t : ckpt.params.tensors()) {
        tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", t.offset * sizeof(float)}});
        tensor_bytes += t.size() * sizeof(float);
    }
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : ckpt.train_log) log.push_back({e.step, e.loss});
    nlohmann::json manifest = {
        {"format_version", kCheckpointVersion},
        {"config", to_json(ckpt.config)},
        {"schema", schema_to_json(ckpt.schema)},
        {"target", ckpt.target ? nlohmann::json(*ckpt.target) : nlohmann::json(nullptr)},
        {"vocab", vocab_to_json(ckpt.vocab)},
        {"train_log", log},
        {"tensors", tensors},
        {"tensor_bytes", tensor_bytes},
    };
    const std::string text = manifest.dump();

    std::string out;
    out.reserve(kMagic.size() + 12 + text.size() + tensor_bytes);
    out.append(kMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out.append(text);
    for (float f : ckpt.params.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    const std::size_t header = kMagic.size() + 12;
    if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
        throw Error(ErrorCode::VersionMismatch, "not a checkpoint archive (bad magic)");
    if (bytes.size() < header) throw Error(ErrorCode::IoError, "truncated checkpoint header");
    const auto version = get_le<std::uint32_t>(bytes, kMagic.size());
    if (version != kCheckpointVersion)
        throw Error(ErrorCode::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                    ", expected " + std::to_string(kCheckpointVersion));
    const auto manifest_len = get_le<std::uint64_t>(bytes, kMagic.size() + 4);
    if (manifest_len > bytes.size() - header) throw Error(ErrorCode::IoError, "truncated checkpoint manifest");

    Checkpoint ckpt;
    try {
        const auto manifest = nlohmann::json::parse(bytes.substr(header, manifest_len));
        if (manifest.at("format_version").get<std::uint32_t>() != kCheckpointVersion)
            throw Error(ErrorCode::VersionMismatch, "manifest format version mismatch");
        ckpt.config = lm_config_from_json(manifest.at("config"));
        ckpt.config.validate();
        ckpt.schema = schema_from_json(manifest.at("schema"));
        if (!manifest.at("target").is_null()) ckpt.target = manifest.at("target").get<std::string>();
        ckpt.vocab = vocab_from_json(manifest.at("vocab"));
        for (const auto& e : manifest.at("train_log"))
            ckpt.train_log.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>()});

        ckpt.params = LmParams(ckpt.config);
        const auto& expected = ckpt.params.tensors();
        const auto& index = manifest.at("tensors");
        if (index.size() != expected.size()) throw Error(ErrorCode::IoError, "tensor index does not match config");
        for (std::size_t t = 0; t < expected.size(); ++t) {
            const auto& e = index[t];
            if (e.at("name").get<std::string>() != expected[t].name ||
                e.at("shape").at(0).get<std::size_t>() != expected[t].rows ||
                e.at("shape").at(1).get<std::size_t>() != expected[t].cols ||
                e.at("offset").get<std::size_t>() != expected[t].offset * sizeof(float))
                throw Error(ErrorCode::IoError, "tensor '" + expected[t].name + "' does not match config");
        }
        const std::size_t tensor_bytes = manifest.at("tensor_bytes").get<std::size_t>();
        if (tensor_bytes != ckpt.params.data().size() * sizeof(float))
            throw Error(ErrorCode::IoError, "tensor section size does not match config");
        const std::size_t at = header + manifest_len;
        if (bytes.size() - at != tensor_bytes) throw Error(ErrorCode::IoError, "truncated tensor section");
        auto& data = ckpt.params.data();
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, at + i * sizeof(float)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("malformed checkpoint manifest: ") + e.what());
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

}  // namespace great
