#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "scube/image.hpp"

namespace scube::testing {

inline ImageTensor random_image(Size size, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> px(3u * size.height * size.width);
  for (double& v : px) v = u(rng);
  return ImageTensor(size, std::move(px));
}

/// Gray level plus uniform noise in [-noise, noise], clamped.
inline ImageTensor gray_image(Size size, double level, double noise, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-noise, noise);
  std::vector<double> px(3u * size.height * size.width);
  for (double& v : px) v = level + u(rng);
  return ImageTensor::clamped(size, std::move(px));
}

inline ImageTensor gray(Size size, double level) { return ImageTensor(size, level, level, level); }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("scube-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace scube::testing
