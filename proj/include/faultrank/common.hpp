#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace faultrank {

// Error hierarchy. Schema/Parse/Validation map to the three ways an input
// file can be bad; PipelineError covers stage-level refusals.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class PipelineError : public Error {
public:
    using Error::Error;
};

// ----------------------------------------------------------------------------
// Logging: plain stderr lines, silenceable for tests.

inline bool& log_enabled() {
    static bool enabled = true;
    return enabled;
}

inline void log_info(const std::string& msg) {
    if (log_enabled()) std::clog << "[faultrank] " << msg << '\n';
}

inline void log_warn(const std::string& msg) {
    if (log_enabled()) std::clog << "[faultrank] warning: " << msg << '\n';
}

// ----------------------------------------------------------------------------
// FNV-1a 64-bit digest, used for artifact content digests and catalog hashes.

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline std::string digest_hex(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

// ----------------------------------------------------------------------------
// Small file helpers.

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("short write: " + path);
}

inline bool file_exists(const std::string& path) {
    std::ifstream in(path);
    return static_cast<bool>(in);
}

// Fixed-point percent formatting ("75.37"), two decimals, no negative zero.
inline std::string format_pct(double v) {
    if (v > -0.005 && v < 0.005) v = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace faultrank
