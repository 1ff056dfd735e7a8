#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmmunit {

enum class ErrorKind {
  argument,
  dimension,
  shape,
  label,
  unsupported,
  config,
  data,
  checkpoint,
  numeric,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GMMUNIT_DEFINE_ERROR(Name, Kind)                                    \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

GMMUNIT_DEFINE_ERROR(ArgumentError, argument)
GMMUNIT_DEFINE_ERROR(DimensionError, dimension)
GMMUNIT_DEFINE_ERROR(ShapeError, shape)
GMMUNIT_DEFINE_ERROR(LabelError, label)
GMMUNIT_DEFINE_ERROR(UnsupportedError, unsupported)
GMMUNIT_DEFINE_ERROR(ConfigError, config)
GMMUNIT_DEFINE_ERROR(DataError, data)
GMMUNIT_DEFINE_ERROR(CheckpointError, checkpoint)
GMMUNIT_DEFINE_ERROR(NumericError, numeric)

#undef GMMUNIT_DEFINE_ERROR

}  // namespace gmmunit
