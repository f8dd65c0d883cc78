#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "rng.hpp"

namespace csna::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Pcg32 rng(static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)) ^
                  static_cast<std::uint64_t>(std::hash<std::string>{}(tag)),
              static_cast<std::uint64_t>(::getpid()));
    path_ = std::filesystem::temp_directory_path() / ("csna-" + tag + "-" + std::to_string(rng.next_u32()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  void write(const std::string& name, const std::string& text) const {
    std::filesystem::create_directories((path_ / name).parent_path());
    std::ofstream(path_ / name, std::ios::binary) << text;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace csna::testing
