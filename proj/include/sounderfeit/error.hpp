#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sounderfeit {

// Every library failure derives from Error; the category picks the CLI exit code.
enum class ErrorKind {
    config,      // invalid construction parameters
    range,       // value outside its legal domain
    length,      // vector too short / wrong size
    shape,       // matrix shape mismatch
    usage,       // API misuse (stale cache, disabled loss)
    format,      // corrupt or unreadable file
    corpus,      // corpus construction failed
    blowup,      // waveguide produced non-finite or runaway output
    divergence,  // training produced NaN
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class DivergenceError : public Error {
public:
    DivergenceError(std::size_t batch, const std::string& what)
        : Error(ErrorKind::divergence, what + " at batch " + std::to_string(batch)), batch_(batch) {}
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t batch_;
};

}  // namespace sounderfeit
