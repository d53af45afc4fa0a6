#pragma once

#include <stdexcept>
#include <string>

namespace irisseg {

/// Malformed or inconsistent input data (unreadable files, bad pixel values,
/// dimension mismatches).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {
inline void require_data(bool ok, const std::string& what) {
    if (!ok) throw DataError(what);
}
inline void require_config(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}
}  // namespace detail

}  // namespace irisseg
