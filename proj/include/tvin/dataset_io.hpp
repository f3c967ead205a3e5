#pragma once

#include <string>

#include "tvin/gridworld.hpp"

namespace tvin {

/// Binary dataset file, little-endian:
///   magic "TVIN", version u16, domain u8, m u16, n_maps u32, n_samples u32,
///   then per map: bit-packed obstacle rows (LSB-first within each byte,
///   ceil(m/8) bytes per row) + goal i,j (u16) + goal o (u8),
///   then per sample: map_index u32, i u16, j u16, o u8, action u8.
constexpr uint16_t kDatasetFormatVersion = 1;

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace tvin
