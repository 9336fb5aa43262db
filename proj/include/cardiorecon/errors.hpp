#ifndef CARDIORECON_ERRORS_HPP
#define CARDIORECON_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cardiorecon {

/// Base type for all library errors. The `category()` string is stable and
/// machine-parsable; the CLI prints it as "error: <category>: <message>".
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(category + ": " + message), category_(std::move(category)) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

class EmptySegmentationError : public Error {
public:
    explicit EmptySegmentationError(const std::string& m) : Error("empty-segmentation", m) {}
};

class ParamError : public Error {
public:
    explicit ParamError(const std::string& m) : Error("parameter", m) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class StateError : public Error {
public:
    explicit StateError(const std::string& m) : Error("state", m) {}
};

class FileError : public Error {
public:
    explicit FileError(const std::string& m) : Error("file", m) {}
};

class DegenerateInputError : public Error {
public:
    explicit DegenerateInputError(const std::string& m) : Error("degenerate-input", m) {}
};

}  // namespace cardiorecon

#endif
