#include "tvin/dataset_io.hpp"

#include <cstring>
#include <fstream>

namespace tvin {

namespace {

// Fixed-width little-endian primitives. The host is little-endian everywhere
// we run, but spelling the byte order out keeps the format unambiguous.
template <typename T>
void put(std::ostream& out, T v) {
  uint8_t buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  uint8_t buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write("TVIN", 4);
  put<uint16_t>(out, kDatasetFormatVersion);
  put<uint8_t>(out, static_cast<uint8_t>(ds.domain));
  put<uint16_t>(out, static_cast<uint16_t>(ds.m));
  put<uint32_t>(out, static_cast<uint32_t>(ds.maps.size()));
  put<uint32_t>(out, static_cast<uint32_t>(ds.samples.size()));
  const int row_bytes = (ds.m + 7) / 8;
  std::vector<uint8_t> row(static_cast<size_t>(row_bytes));
  for (const GridMap& map : ds.maps) {
    for (int i = 0; i < ds.m; ++i) {
      std::fill(row.begin(), row.end(), 0);
      for (int j = 0; j < ds.m; ++j)
        if (map.obstacle(i, j)) row[static_cast<size_t>(j / 8)] |= static_cast<uint8_t>(1u << (j % 8));
      out.write(reinterpret_cast<const char*>(row.data()), row_bytes);
    }
    put<uint16_t>(out, static_cast<uint16_t>(map.goal_i));
    put<uint16_t>(out, static_cast<uint16_t>(map.goal_j));
    put<uint8_t>(out, static_cast<uint8_t>(map.goal_o));
  }
  for (const Sample& s : ds.samples) {
    put<uint32_t>(out, s.map_ref);
    put<uint16_t>(out, static_cast<uint16_t>(s.state.i));
    put<uint16_t>(out, static_cast<uint16_t>(s.state.j));
    put<uint8_t>(out, static_cast<uint8_t>(s.state.o));
    put<uint8_t>(out, s.expert_action);
  }
  if (!out) throw DataError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TVIN", 4) != 0)
    throw DataError("not a dataset file: " + path);
  const uint16_t version = get<uint16_t>(in);
  if (version != kDatasetFormatVersion)
    throw DataError("unsupported dataset version " + std::to_string(version));
  Dataset ds;
  ds.domain = static_cast<Domain>(get<uint8_t>(in));
  if (ds.domain != Domain::News && ds.domain != Domain::Moore && ds.domain != Domain::Drive)
    throw DataError("bad domain id in " + path);
  ds.m = get<uint16_t>(in);
  const uint32_t n_maps = get<uint32_t>(in);
  const uint32_t n_samples = get<uint32_t>(in);
  const int row_bytes = (ds.m + 7) / 8;
  std::vector<uint8_t> row(static_cast<size_t>(row_bytes));
  ds.maps.reserve(n_maps);
  for (uint32_t k = 0; k < n_maps; ++k) {
    GridMap map;
    map.m = ds.m;
    map.obstacles.assign(static_cast<size_t>(ds.m * ds.m), 0);
    for (int i = 0; i < ds.m; ++i) {
      in.read(reinterpret_cast<char*>(row.data()), row_bytes);
      for (int j = 0; j < ds.m; ++j)
        map.obstacles[static_cast<size_t>(i * ds.m + j)] =
            (row[static_cast<size_t>(j / 8)] >> (j % 8)) & 1u;
    }
    map.goal_i = get<uint16_t>(in);
    map.goal_j = get<uint16_t>(in);
    map.goal_o = get<uint8_t>(in);
    ds.maps.push_back(std::move(map));
  }
  ds.samples.reserve(n_samples);
  for (uint32_t k = 0; k < n_samples; ++k) {
    Sample s;
    s.map_ref = get<uint32_t>(in);
    s.state.i = get<uint16_t>(in);
    s.state.j = get<uint16_t>(in);
    s.state.o = get<uint8_t>(in);
    s.expert_action = get<uint8_t>(in);
    if (s.map_ref >= ds.maps.size()) throw DataError("sample map index out of range in " + path);
    ds.samples.push_back(s);
  }
  if (!in) throw DataError("truncated dataset file: " + path);
  return ds;
}

}  // namespace tvin
