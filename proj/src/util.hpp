#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace relpara {

enum class ErrorKind {
  InvalidArgument,
  Io,
  Format,
  SchemaVersion,
  HashMismatch,
  Dimension,
  Diverged,
  MissingId,
};

// Every failure raised by the core carries a kind so the C boundary can map it
// onto a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

// splitmix64-seeded xoshiro256**. The standard distributions are
// implementation-defined, so everything that must be byte-reproducible draws
// from here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next_u64();
  double uniform();                              // [0, 1)
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t bound);      // [0, bound)
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t s_[4];
};

// 64-bit FNV-1a; used for artifact content hashes and checkpoint checksums.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Diagnostics that must not abort. The sink defaults to stderr; tests and the
// C API can redirect or silence it.
using WarningSink = void (*)(std::string_view message);
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

// Shortest round-trippable text form of a double.
std::string format_double(double value);

}  // namespace relpara
