#pragma once

// Binary checkpoint format for parameter stores.
//
//   magic   "RNCK" (4 bytes)
//   version u32 LE
//   count   u64 LE                     number of parameter records
//   records, in registration order:
//     name_len u32 LE, name bytes (no terminator)
//     rank     u32 LE
//     dims     rank x u64 LE
//     data     product(dims) x f64 LE
//
// Doubles are written raw; this assumes IEEE-754 little-endian hosts, which
// is everything we target.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "roomnerf/optim.hpp"

namespace roomnerf {

inline constexpr char kCheckpointMagic[4] = {'R', 'N', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), "checkpoint: truncated while reading ", what);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "checkpoint: cannot open '", path, "' for writing");
  os.write(kCheckpointMagic, 4);
  detail::write_le<uint32_t>(os, kCheckpointVersion);
  detail::write_le<uint64_t>(os, store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.names()[i];
    const Array& a = store.params()[i]->value;
    detail::write_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<uint32_t>(os, static_cast<uint32_t>(a.rank()));
    for (int64_t d : a.shape) detail::write_le<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(a.data.data()),
             static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  }
  require(static_cast<bool>(os), "checkpoint: write failed for '", path, "'");
}

// Loads values into an existing store. Every record must match a registered
// parameter by name and shape, and every parameter must be covered — partial
// checkpoints are rejected rather than silently leaving stale values.
inline void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "checkpoint: cannot open '", path, "'");
  char magic[4];
  is.read(magic, 4);
  require(static_cast<bool>(is) && std::memcmp(magic, kCheckpointMagic, 4) == 0,
          "checkpoint: '", path, "' is not a checkpoint file (bad magic)");
  const auto version = detail::read_le<uint32_t>(is, "version");
  require(version == kCheckpointVersion, "checkpoint: unsupported version ", version,
          " in '", path, "'");
  const auto count = detail::read_le<uint64_t>(is, "record count");
  require(count == store.size(), "checkpoint: '", path, "' holds ", count,
          " parameters but the model defines ", store.size());
  for (uint64_t r = 0; r < count; ++r) {
    const auto name_len = detail::read_le<uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    require(static_cast<bool>(is), "checkpoint: truncated name in '", path, "'");
    require(store.contains(name), "checkpoint: '", path, "' names unknown parameter '", name,
            "'");
    NodePtr p = store.get(name);
    const auto rank = detail::read_le<uint32_t>(is, "rank");
    std::vector<int64_t> shape(rank);
    for (uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int64_t>(detail::read_le<uint64_t>(is, "dimension"));
    require(shape == p->value.shape, "checkpoint: parameter '", name, "' stored as ",
            Array::shape_str(shape), " but model expects ", p->value.shape_str());
    is.read(reinterpret_cast<char*>(p->value.data.data()),
            static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    require(static_cast<bool>(is), "checkpoint: truncated data for '", name, "'");
  }
}

}  // namespace roomnerf
