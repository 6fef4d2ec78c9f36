#pragma once

#include <stdexcept>
#include <string>

namespace qfl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// qsim
struct EmbeddingError : Error { using Error::Error; };
struct GateError : Error { using Error::Error; };
struct ChannelError : Error { using Error::Error; };

// oracle
struct ZneConfigError : Error { using Error::Error; };
struct ScaleOverflowError : Error { using Error::Error; };
struct DegenerateReferenceError : Error { using Error::Error; };

// fed
struct ClientDataError : Error { using Error::Error; };
struct AggregationError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// data
struct PartitionError : Error { using Error::Error; };

// synth
struct FloorNotReachedError : Error { using Error::Error; };

}  // namespace qfl
