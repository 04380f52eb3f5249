#pragma once

#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

#include "faultrank/common.hpp"

namespace testutil {

// Tests run quiet; the library otherwise narrates every stage to stderr.
inline const bool quiet_logs = [] {
    faultrank::log_enabled() = false;
    return true;
}();

// Self-cleaning scratch directory for fixture files and pipeline outputs.
class TempDir {
  public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (int attempt = 0; attempt < 100; ++attempt) {
            auto candidate = base / ("faultrank_test_" + std::to_string(rd()));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("could not create a temporary directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

    std::string write(const std::string& name, const std::string& content) const {
        std::string p = file(name);
        faultrank::write_file(p, content);
        return p;
    }

  private:
    std::filesystem::path path_;
};

}  // namespace testutil
