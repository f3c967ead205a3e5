#pragma once

#include <string>
#include <vector>

#include "tvin/autodiff.hpp"

namespace tvin {

/// Parameter checkpoint, little-endian:
///   magic "TVCK", version u16, count u32, then per param:
///   name length u16 + name bytes, rank u8, dims u32 each, frozen u8,
///   raw f32 values.
constexpr uint16_t kCheckpointFormatVersion = 1;

void save_checkpoint(const std::vector<const Param*>& params, const std::string& path);
std::vector<Param> load_checkpoint(const std::string& path);

/// Finds a param by name; null if absent.
const Param* find_param(const std::vector<Param>& params, const std::string& name);

}  // namespace tvin
