#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dcss {

// Base of every error raised by the library. The CLI maps the concrete
// type to an exit code (config → 2, numeric → 3, everything else → 1).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    NumericError(const std::string& what, std::ptrdiff_t layer = -1)
        : Error(layer >= 0 ? what + " (layer " + std::to_string(layer) + ")" : what), layer_(layer) {}

    /// Offending layer index, or -1 when not tied to a layer.
    std::ptrdiff_t layer() const noexcept { return layer_; }

private:
    std::ptrdiff_t layer_;
};

class DegenerateClusterError : public NumericError {
public:
    explicit DegenerateClusterError(std::ptrdiff_t cluster)
        : NumericError("degenerate cluster " + std::to_string(cluster) + ": membership mass below 1e-12"),
          cluster_(cluster) {}

    std::ptrdiff_t cluster() const noexcept { return cluster_; }

private:
    std::ptrdiff_t cluster_;
};

class ParseError : public FormatError {
public:
    ParseError(const std::string& what, std::size_t line)
        : FormatError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace dcss
