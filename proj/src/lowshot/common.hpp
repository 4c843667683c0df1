#pragma once

#include <cstdint>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowshot {

using Shape = std::vector<std::int64_t>;

// Error taxonomy used across the core. The C boundary maps each class to a
// status code; inside the core everything is exceptions.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

// Non-finite value detected during evaluation; message names the primitive.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

class IncompatibleError : public Error {
public:
    explicit IncompatibleError(const std::string& msg) : Error("incompatible: " + msg) {}
};

// Message text of an exception with any leading taxonomy prefix removed, for
// re-wrapping with added context.
inline std::string error_detail(const std::exception& e) {
    std::string m = e.what();
    const std::string p = "numeric: ";
    if (m.rfind(p, 0) == 0) m.erase(0, p.size());
    return m;
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

}  // namespace lowshot
