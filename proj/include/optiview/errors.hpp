#pragma once

#include <stdexcept>
#include <string>

namespace optiview {

// Base for all recoverable errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// look_at target coincides with the eye position.
class DegenerateDirection : public Error {
public:
    explicit DegenerateDirection(const std::string& msg) : Error(msg) {}
};

// A rendered view contains no target pixels (nothing to observe).
class EmptyObservation : public Error {
public:
    explicit EmptyObservation(const std::string& msg) : Error(msg) {}
};

class UnknownCategory : public Error {
public:
    explicit UnknownCategory(const std::string& msg) : Error(msg) {}
};

class EmptyInput : public Error {
public:
    explicit EmptyInput(const std::string& msg) : Error(msg) {}
};

class MissingLibraryEntry : public Error {
public:
    explicit MissingLibraryEntry(const std::string& msg) : Error(msg) {}
};

class VersionMismatch : public Error {
public:
    explicit VersionMismatch(const std::string& msg) : Error(msg) {}
};

class CorruptRecord : public Error {
public:
    explicit CorruptRecord(const std::string& msg) : Error(msg) {}
};

class ShapeMismatch : public Error {
public:
    explicit ShapeMismatch(const std::string& msg) : Error(msg) {}
};

class EmptySequence : public Error {
public:
    explicit EmptySequence(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class DivergedLoss : public Error {
public:
    explicit DivergedLoss(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace optiview
