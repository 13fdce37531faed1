#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "great/model.hpp"
#include "great/table.hpp"
#include "great/tokenizer.hpp"
#include "json.hpp"

namespace great {

struct TrainLogEntry {
    std::size_t step = 0;
    double loss = 0.0;

    bool operator==(const TrainLogEntry&) const = default;
};

struct Checkpoint {
    LmConfig config;
    LmParams params;
    Vocabulary vocab;
    Schema schema;
    std::optional<std::string> target;
    std::vector<TrainLogEntry> train_log;

    bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);

/// Archive layout: 8-byte magic "GREATCKP", u32 format version, u64 manifest
/// length, the JSON manifest (config, schema, vocabulary, train log and a
/// name/shape/offset index of every tensor), then all tensors as
/// little-endian float32.
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws VersionMismatch (bad magic or version) or IoError (truncated or
/// malformed contents).
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace great
