#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace scube {

struct Size {
  int height = 0;
  int width = 0;

  friend bool operator==(const Size&, const Size&) = default;
};

/// RGB raster with channel values in [0, 1], stored planar (channel, row, column).
///
/// Immutable once constructed; every constructor validates the value range, so
/// any ImageTensor in hand satisfies the invariants.
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  ImageTensor() = default;

  /// Constant-color image.
  ImageTensor(Size size, double r, double g, double b);

  /// Takes planar pixels; throws ArgumentError on wrong length or out-of-range values.
  ImageTensor(Size size, std::vector<double> planar);

  /// Same as the planar constructor but clamps into [0, 1] instead of rejecting.
  /// Non-finite values are still rejected.
  static ImageTensor clamped(Size size, std::vector<double> planar);

  Size size() const noexcept { return size_; }
  int height() const noexcept { return size_.height; }
  int width() const noexcept { return size_.width; }
  bool empty() const noexcept { return pixels_.empty(); }

  double at(int channel, int y, int x) const {
    return pixels_[(static_cast<std::size_t>(channel) * size_.height + y) * size_.width + x];
  }

  std::span<const double> pixels() const noexcept { return pixels_; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  Size size_{};
  std::vector<double> pixels_;
};

/// Images addressed by id. Lookups of unknown ids throw NotFoundError.
class ImageStore {
 public:
  void add(const std::string& id, ImageTensor image);
  const ImageTensor& at(const std::string& id) const;
  bool contains(const std::string& id) const { return images_.count(id) != 0; }
  std::size_t size() const noexcept { return images_.size(); }

 private:
  std::map<std::string, ImageTensor> images_;
};

/// Bilinear resize with half-pixel centers and edge clamping; no antialiasing.
ImageTensor resize_bilinear(const ImageTensor& image, Size target);

/// Decodes PNG or JPEG bytes at native resolution.
ImageTensor decode_image(std::span<const std::uint8_t> bytes);

/// Loads at native resolution.
ImageTensor load_image(const std::filesystem::path& path);

/// Loads and resizes to `target` (bilinear).
ImageTensor load_image(const std::filesystem::path& path, Size target);

/// 8-bit PNG encoding; channel values are rounded to the nearest of 256 levels.
std::vector<std::uint8_t> encode_png(const ImageTensor& image);

void save_png(const ImageTensor& image, const std::filesystem::path& path);

/// Peak signal-to-noise ratio in dB for unit-range images; +inf for identical inputs.
double psnr(const ImageTensor& a, const ImageTensor& b);

}  // namespace scube
