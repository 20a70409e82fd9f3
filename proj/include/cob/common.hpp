#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cob {

// Error taxonomy shared by all modules. Every failure surfaces as one of
// these so the CLI can map it to an exit status and a single diagnostic line.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct BoundsError : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct NumericalFault : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct ContractError : Error {
    using Error::Error;
};
struct GenerationError : Error {
    using Error::Error;
};

using NodeId = std::int32_t;

}  // namespace cob
