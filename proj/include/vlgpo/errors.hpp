#pragma once

#include <stdexcept>
#include <string>

namespace vlgpo {

// Exit-code classes used by the CLI: validation (1), divergence (2), I/O (3).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vlgpo
