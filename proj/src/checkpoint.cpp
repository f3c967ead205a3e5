#include "tvin/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace tvin {

namespace {

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

void put_f32(std::ostream& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put<uint32_t>(out, bits);
}

float get_f32(std::istream& in) {
  const uint32_t bits = get<uint32_t>(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::vector<const Param*>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write("TVCK", 4);
  put<uint16_t>(out, kCheckpointFormatVersion);
  put<uint32_t>(out, static_cast<uint32_t>(params.size()));
  for (const Param* p : params) {
    put<uint16_t>(out, static_cast<uint16_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<uint8_t>(out, static_cast<uint8_t>(p->value.rank()));
    for (int d : p->value.shape()) put<uint32_t>(out, static_cast<uint32_t>(d));
    put<uint8_t>(out, p->frozen ? 1 : 0);
    const int n = p->value.numel();
    for (int i = 0; i < n; ++i) put_f32(out, p->value[i]);
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<Param> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TVCK", 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  const uint16_t version = get<uint16_t>(in);
  if (version != kCheckpointFormatVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = get<uint32_t>(in);
  std::vector<Param> params;
  params.reserve(count);
  for (uint32_t k = 0; k < count; ++k) {
    const uint16_t name_len = get<uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint8_t rank = get<uint8_t>(in);
    std::vector<int> shape;
    for (uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(get<uint32_t>(in)));
    const bool frozen = get<uint8_t>(in) != 0;
    Tensor value(shape);
    const int n = value.numel();
    for (int i = 0; i < n; ++i) value[i] = get_f32(in);
    params.emplace_back(std::move(name), std::move(value), frozen);
  }
  if (!in) throw DataError("truncated checkpoint: " + path);
  return params;
}

const Param* find_param(const std::vector<Param>& params, const std::string& name) {
  for (const Param& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

}  // namespace tvin
