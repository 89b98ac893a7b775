#pragma once

#include <stdexcept>
#include <string>

namespace fogsim {

/// Base of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define FOGSIM_DEFINE_ERROR(Name) \
  struct Name : Error {           \
    using Error::Error;           \
  }

FOGSIM_DEFINE_ERROR(InfeasibleAllocation);
FOGSIM_DEFINE_ERROR(EmptyInstance);
FOGSIM_DEFINE_ERROR(InvalidDistance);
FOGSIM_DEFINE_ERROR(InvalidCapacity);
FOGSIM_DEFINE_ERROR(InvalidConfig);
FOGSIM_DEFINE_ERROR(ProtocolViolation);
FOGSIM_DEFINE_ERROR(InstanceTooLarge);
FOGSIM_DEFINE_ERROR(ShapeError);
FOGSIM_DEFINE_ERROR(EmptySupport);
FOGSIM_DEFINE_ERROR(DimensionMismatch);
FOGSIM_DEFINE_ERROR(FormatError);

#undef FOGSIM_DEFINE_ERROR

}  // namespace fogsim
