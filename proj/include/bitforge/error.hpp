#pragma once

#include <stdexcept>
#include <string>

namespace bitforge {

// Error kinds map onto CLI exit codes: config -> 2, infeasible -> 3, divergence -> 4.
enum class ErrorKind { config, infeasible, divergence };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return Error(ErrorKind::config, msg); }
inline Error infeasible_error(const std::string& msg) { return Error(ErrorKind::infeasible, msg); }
inline Error divergence_error(const std::string& msg) { return Error(ErrorKind::divergence, msg); }

}  // namespace bitforge
