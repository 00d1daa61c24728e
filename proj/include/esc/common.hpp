#ifndef ESC_COMMON_HPP
#define ESC_COMMON_HPP

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace esc {

// Single RNG type for the whole pipeline. Every stochastic component takes
// one of these by reference so a run is reproducible from one seed.
using Rng = std::mt19937_64;

// Error taxonomy. The CLI maps these onto process exit codes:
// UsageError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
// Raised when a computation produces NaN/Inf.
struct NumericError : Error {
  using Error::Error;
};

struct MalformedWav : DataError {
  using DataError::DataError;
};
struct UnsupportedEncoding : DataError {
  using DataError::DataError;
};
struct EmptyAudio : DataError {
  using DataError::DataError;
};
struct ClipTooShort : DataError {
  using DataError::DataError;
};
struct ShapeMismatch : DataError {
  using DataError::DataError;
};
struct TooFewFrames : DataError {
  using DataError::DataError;
};
struct EmptyDataset : DataError {
  using DataError::DataError;
};
struct MissingFeatures : DataError {
  using DataError::DataError;
};
struct FoldOutOfRange : UsageError {
  using UsageError::UsageError;
};
struct NoSegments : DataError {
  using DataError::DataError;
};
struct DegenerateInput : DataError {
  using DataError::DataError;
};

namespace io {

// Little-endian scalar IO, independent of host byte order.
inline void write_bytes_le(std::ostream& os, uint64_t v, int n) {
  char buf[8];
  for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, n);
}
inline uint64_t read_bytes_le(std::istream& is, int n) {
  unsigned char buf[8] = {0};
  is.read(reinterpret_cast<char*>(buf), n);
  if (!is) throw DataError("unexpected end of file");
  uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_u16(std::ostream& os, uint16_t v) { write_bytes_le(os, v, 2); }
inline void write_u32(std::ostream& os, uint32_t v) { write_bytes_le(os, v, 4); }
inline uint16_t read_u16(std::istream& is) { return static_cast<uint16_t>(read_bytes_le(is, 2)); }
inline uint32_t read_u32(std::istream& is) { return static_cast<uint32_t>(read_bytes_le(is, 4)); }

inline void write_f32(std::ostream& os, float v) {
  uint32_t u;
  static_assert(sizeof(u) == sizeof(v));
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}
inline float read_f32(std::istream& is) {
  uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}
inline void write_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  write_bytes_le(os, u, 8);
}
inline double read_f64(std::istream& is) {
  uint64_t u = read_bytes_le(is, 8);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace io
}  // namespace esc

#endif  // ESC_COMMON_HPP
