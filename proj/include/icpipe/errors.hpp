#pragma once

#include <stdexcept>
#include <string>

namespace icpipe {

// Error categories map to CLI exit codes: ConfigError -> 2, DataError -> 3,
// ModelVersionError -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class ModelVersionError : public Error {
public:
    explicit ModelVersionError(const std::string& msg) : Error(msg) {}
};

class UnknownZoomError : public DataError {
public:
    explicit UnknownZoomError(const std::string& msg) : DataError(msg) {}
};

class DegenerateHistogramError : public DataError {
public:
    explicit DegenerateHistogramError(const std::string& msg) : DataError(msg) {}
};

class PatchTooSmallError : public DataError {
public:
    explicit PatchTooSmallError(const std::string& msg) : DataError(msg) {}
};

class DetectorError : public DataError {
public:
    explicit DetectorError(const std::string& msg) : DataError(msg) {}
};

class ShapeMismatchError : public DataError {
public:
    explicit ShapeMismatchError(const std::string& msg) : DataError(msg) {}
};

class EmptyClassError : public DataError {
public:
    explicit EmptyClassError(const std::string& msg) : DataError(msg) {}
};

class EmptyInputError : public DataError {
public:
    explicit EmptyInputError(const std::string& msg) : DataError(msg) {}
};

class SingleClassError : public DataError {
public:
    explicit SingleClassError(const std::string& msg) : DataError(msg) {}
};

class LengthMismatchError : public DataError {
public:
    explicit LengthMismatchError(const std::string& msg) : DataError(msg) {}
};

class InvalidFractionsError : public DataError {
public:
    explicit InvalidFractionsError(const std::string& msg) : DataError(msg) {}
};

class OutOfRangeError : public DataError {
public:
    explicit OutOfRangeError(const std::string& msg) : DataError(msg) {}
};

class UngroupedLabelError : public DataError {
public:
    explicit UngroupedLabelError(const std::string& msg) : DataError(msg) {}
};

}  // namespace icpipe
