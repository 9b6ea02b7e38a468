#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "din/network.hpp"

namespace din {

/// "DINC", version u32, tensor count u32; per tensor: name length u16, name,
/// rank u8, dims u32 each, f32 payload; then a u32 length and the DinConfig
/// as JSON. Tensors whose names start with "state." carry training state and
/// are returned as extras on load.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const DinNetwork& net,
                              const std::map<std::string, Tensor>& extras = {});

struct LoadedCheckpoint {
  std::unique_ptr<DinNetwork> net;
  std::map<std::string, Tensor> extras;
};

/// The head set is inferred from the stored tensor names.
LoadedCheckpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const DinNetwork& net,
                     const std::map<std::string, Tensor>& extras = {});
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace din
