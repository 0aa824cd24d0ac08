#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsim {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised while loading a dataset split: malformed JSON, bad cardinality, empty file.
class DatasetError : public Error {
public:
    DatasetError(std::string message, std::size_t line)
        : Error(std::move(message)), line_(line) {}

    /// 1-based line number in the source file, 0 when not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Binary container problems. Each kind is reported distinctly.
class FormatError : public Error {
public:
    enum class Kind { BadMagic, VersionMismatch, Truncated, ChecksumMismatch, Io, Corrupt };

    FormatError(Kind kind, std::string message) : Error(std::move(message)), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// A vector whose cosine similarity is undefined (zero norm).
class DegenerateVector : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(std::string message, std::size_t step)
        : Error(std::move(message)), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace dsim
