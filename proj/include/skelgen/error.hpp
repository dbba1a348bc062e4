#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skelgen {

// Base for every structured failure the library reports. `module()` names the
// owning module so the CLI can print module-qualified messages.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

#define SKELGEN_DEFINE_ERROR(Name)                                       \
  class Name : public Error {                                            \
   public:                                                               \
    Name(std::string module, const std::string& what)                    \
        : Error(std::move(module), what) {}                              \
  };

SKELGEN_DEFINE_ERROR(DomainError)
SKELGEN_DEFINE_ERROR(TokenError)
SKELGEN_DEFINE_ERROR(DimensionError)
SKELGEN_DEFINE_ERROR(LengthError)
SKELGEN_DEFINE_ERROR(InputError)
SKELGEN_DEFINE_ERROR(FormatError)
SKELGEN_DEFINE_ERROR(VersionError)
SKELGEN_DEFINE_ERROR(ConfigError)
SKELGEN_DEFINE_ERROR(EmptyMotionError)
SKELGEN_DEFINE_ERROR(IoError)

#undef SKELGEN_DEFINE_ERROR

// Body length of a token stream is not a whole number of frames.
class StructureError : public Error {
 public:
  StructureError(std::string module, const std::string& what, std::ptrdiff_t frame)
      : Error(std::move(module), what), frame_(frame) {}
  // Index of the first frame that is incomplete.
  std::ptrdiff_t frame() const noexcept { return frame_; }

 private:
  std::ptrdiff_t frame_;
};

// A non-finite value appeared; `where` identifies the block or stage.
class NumericError : public Error {
 public:
  NumericError(std::string module, const std::string& what, int where = -1)
      : Error(std::move(module), what), where_(where) {}
  int where() const noexcept { return where_; }

 private:
  int where_;
};

}  // namespace skelgen
