#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ctxlstm/model.hpp"
#include "json.hpp"

namespace ctxlstm {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Parameters params;
  std::uint64_t seed = 0;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
/// Validates format tag, version and every matrix shape.
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json hyper_to_json(const HyperParams& hp);
HyperParams hyper_from_json(const nlohmann::json& doc);

}  // namespace ctxlstm
