#include "scube/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "scube/errors.hpp"

namespace scube {
namespace {

void check_size(Size size) {
  if (size.height <= 0 || size.width <= 0) {
    throw ArgumentError("image size must be positive, got " + std::to_string(size.height) + "x" +
                        std::to_string(size.width));
  }
}

std::size_t planar_length(Size size) {
  return static_cast<std::size_t>(ImageTensor::kChannels) * size.height * size.width;
}

}  // namespace

ImageTensor::ImageTensor(Size size, double r, double g, double b) : size_(size) {
  check_size(size);
  const double rgb[3] = {r, g, b};
  for (double v : rgb) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("channel value outside [0,1]");
  }
  const std::size_t plane = static_cast<std::size_t>(size.height) * size.width;
  pixels_.resize(planar_length(size));
  for (int c = 0; c < kChannels; ++c) {
    std::fill_n(pixels_.begin() + c * plane, plane, rgb[c]);
  }
}

ImageTensor::ImageTensor(Size size, std::vector<double> planar) : size_(size), pixels_(std::move(planar)) {
  check_size(size);
  if (pixels_.size() != planar_length(size)) {
    throw ArgumentError("pixel buffer length does not match 3x" + std::to_string(size.height) + "x" +
                        std::to_string(size.width));
  }
  for (double v : pixels_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("channel value outside [0,1]");
  }
}

ImageTensor ImageTensor::clamped(Size size, std::vector<double> planar) {
  for (double& v : planar) {
    if (!std::isfinite(v)) throw ArgumentError("non-finite channel value");
    v = std::clamp(v, 0.0, 1.0);
  }
  return ImageTensor(size, std::move(planar));
}

void ImageStore::add(const std::string& id, ImageTensor image) {
  if (image.empty()) throw ArgumentError("image store: empty image for id '" + id + "'");
  images_.insert_or_assign(id, std::move(image));
}

const ImageTensor& ImageStore::at(const std::string& id) const {
  const auto it = images_.find(id);
  if (it == images_.end()) throw NotFoundError("unknown image id '" + id + "'");
  return it->second;
}

ImageTensor resize_bilinear(const ImageTensor& image, Size target) {
  check_size(target);
  if (image.empty()) throw ArgumentError("cannot resize an empty image");
  if (image.size() == target) return image;

  const int src_h = image.height();
  const int src_w = image.width();
  const double scale_y = static_cast<double>(src_h) / target.height;
  const double scale_x = static_cast<double>(src_w) / target.width;

  // Precompute the two taps and weights per output row/column.
  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [](int out_len, int src_len, double scale) {
    std::vector<Tap> t(out_len);
    for (int i = 0; i < out_len; ++i) {
      double src = (i + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(src_len - 1));
      const int lo = static_cast<int>(std::floor(src));
      const int hi = std::min(lo + 1, src_len - 1);
      t[i] = {lo, hi, src - lo};
    }
    return t;
  };
  const auto ty = taps(target.height, src_h, scale_y);
  const auto tx = taps(target.width, src_w, scale_x);

  std::vector<double> out(planar_length(target));
  std::size_t k = 0;
  for (int c = 0; c < ImageTensor::kChannels; ++c) {
    for (int y = 0; y < target.height; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < target.width; ++x) {
        const Tap& b = tx[x];
        const double top = image.at(c, a.lo, b.lo) * (1.0 - b.frac) + image.at(c, a.lo, b.hi) * b.frac;
        const double bot = image.at(c, a.hi, b.lo) * (1.0 - b.frac) + image.at(c, a.hi, b.hi) * b.frac;
        out[k++] = top * (1.0 - a.frac) + bot * a.frac;
      }
    }
  }
  // Convex combinations of in-range values can drift by an ulp.
  return ImageTensor::clamped(target, std::move(out));
}

ImageTensor decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw DecodeError("empty image buffer");
  cv::Mat raw;
  try {
    const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
    raw = cv::imdecode(buf, cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw DecodeError(std::string("image decode failed: ") + e.what());
  }
  if (raw.empty()) throw DecodeError("bytes are not a supported raster format (PNG/JPEG)");

  const Size size{raw.rows, raw.cols};
  std::vector<double> planar(planar_length(size));
  const std::size_t plane = static_cast<std::size_t>(size.height) * size.width;
  for (int y = 0; y < raw.rows; ++y) {
    const auto* row = raw.ptr<cv::Vec3b>(y);
    for (int x = 0; x < raw.cols; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * size.width + x;
      // OpenCV decodes to BGR.
      planar[idx] = row[x][2] / 255.0;
      planar[plane + idx] = row[x][1] / 255.0;
      planar[2 * plane + idx] = row[x][0] / 255.0;
    }
  }
  return ImageTensor(size, std::move(planar));
}

ImageTensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot read image file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

ImageTensor load_image(const std::filesystem::path& path, Size target) {
  check_size(target);
  return resize_bilinear(load_image(path), target);
}

std::vector<std::uint8_t> encode_png(const ImageTensor& image) {
  if (image.empty()) throw ArgumentError("cannot encode an empty image");
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  auto quantize = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      row[x] = cv::Vec3b(quantize(image.at(2, y, x)), quantize(image.at(1, y, x)), quantize(image.at(0, y, x)));
    }
  }
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", mat, out)) throw IoError("PNG encoding failed");
  return out;
}

void save_png(const ImageTensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_png(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  if (a.size() != b.size()) throw ArgumentError("psnr: image sizes differ");
  double sq = 0.0;
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = pa[i] - pb[i];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(pa.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace scube
