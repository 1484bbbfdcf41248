#pragma once

#include <stdexcept>
#include <string>

namespace sculpt {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can report and exit on a single type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class OverflowError : public Error { using Error::Error; };
class ContractError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class AllocationError : public Error { using Error::Error; };
class PruneError : public Error { using Error::Error; };
class PipelineError : public Error { using Error::Error; };

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
    long epoch() const noexcept { return epoch_; }

private:
    long epoch_;
};

}  // namespace sculpt
