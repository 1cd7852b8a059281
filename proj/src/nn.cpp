#include "scube/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "scube/errors.hpp"

namespace scube::nn {
namespace {

constexpr char kBlobMagic[8] = {'S', 'C', 'U', 'B', 'E', 'W', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

Eigen::Map<const RowMatrix> weights(const Conv3x3& l, std::span<const double> p) {
  return {p.data() + l.weight_offset, l.out, static_cast<Eigen::Index>(l.in) * 9};
}

}  // namespace

Tensor to_tensor(const ImageTensor& image, double offset) {
  Tensor t(ImageTensor::kChannels, image.height(), image.width());
  const auto px = image.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) t.data[i] = px[i] + offset;
  return t;
}

Conv3x3 ParameterLayout::conv(int in, int out, int stride) {
  Conv3x3 l{in, out, stride, size_, 0};
  l.bias_offset = size_ + static_cast<std::size_t>(out) * in * 9;
  size_ += l.parameter_count();
  return l;
}

Dense ParameterLayout::dense(int in, int out) {
  Dense l{in, out, size_, 0};
  l.bias_offset = size_ + static_cast<std::size_t>(out) * in;
  size_ += l.parameter_count();
  return l;
}

void init_conv(const Conv3x3& layer, std::span<double> params, std::mt19937_64& rng, double gain) {
  std::normal_distribution<double> dist(0.0, std::sqrt(gain / (layer.in * 9.0)));
  const std::size_t n = static_cast<std::size_t>(layer.out) * layer.in * 9;
  for (std::size_t i = 0; i < n; ++i) params[layer.weight_offset + i] = dist(rng);
  std::fill_n(params.begin() + layer.bias_offset, layer.out, 0.0);
}

void init_dense(const Dense& layer, std::span<double> params, std::mt19937_64& rng, double gain) {
  std::normal_distribution<double> dist(0.0, std::sqrt(gain / layer.in));
  const std::size_t n = static_cast<std::size_t>(layer.out) * layer.in;
  for (std::size_t i = 0; i < n; ++i) params[layer.weight_offset + i] = dist(rng);
  std::fill_n(params.begin() + layer.bias_offset, layer.out, 0.0);
}

RowMatrix im2col(const Conv3x3& layer, const Tensor& x) {
  const int oh = layer.output_extent(x.height);
  const int ow = layer.output_extent(x.width);
  RowMatrix cols(static_cast<Eigen::Index>(layer.in) * 9, static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < layer.in; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols.row((c * 3 + ky) * 3 + kx).data();
        for (int y = 0; y < oh; ++y) {
          const int sy = y * layer.stride + ky - 1;
          for (int xo = 0; xo < ow; ++xo) {
            const int sx = xo * layer.stride + kx - 1;
            row[y * ow + xo] = (sy >= 0 && sy < x.height && sx >= 0 && sx < x.width) ? x(c, sy, sx) : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

Tensor conv_forward(const Conv3x3& layer, std::span<const double> params, const Tensor& x, RowMatrix* columns) {
  if (x.channels != layer.in) throw ArgumentError("conv input channel mismatch");
  RowMatrix cols = im2col(layer, x);
  Tensor out(layer.out, layer.output_extent(x.height), layer.output_extent(x.width));
  auto y = out.matrix();
  y.noalias() = weights(layer, params) * cols;
  const Eigen::Map<const Eigen::VectorXd> bias(params.data() + layer.bias_offset, layer.out);
  y.colwise() += bias;
  if (columns) *columns = std::move(cols);
  return out;
}

Tensor conv_backward(const Conv3x3& layer, std::span<const double> params, const Tensor& input,
                     const RowMatrix& columns, const Tensor& grad_out, std::span<double> grads, bool input_grad) {
  const auto gy = grad_out.matrix();
  if (!grads.empty()) {
    Eigen::Map<RowMatrix> gw(grads.data() + layer.weight_offset, layer.out, static_cast<Eigen::Index>(layer.in) * 9);
    gw.noalias() += gy * columns.transpose();
    Eigen::Map<Eigen::VectorXd> gb(grads.data() + layer.bias_offset, layer.out);
    gb += gy.rowwise().sum();
  }
  if (!input_grad) return {};

  const RowMatrix gcols = weights(layer, params).transpose() * gy;
  Tensor gx(input.channels, input.height, input.width);
  const int oh = grad_out.height;
  const int ow = grad_out.width;
  for (int c = 0; c < layer.in; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = gcols.row((c * 3 + ky) * 3 + kx).data();
        for (int y = 0; y < oh; ++y) {
          const int sy = y * layer.stride + ky - 1;
          if (sy < 0 || sy >= input.height) continue;
          for (int xo = 0; xo < ow; ++xo) {
            const int sx = xo * layer.stride + kx - 1;
            if (sx < 0 || sx >= input.width) continue;
            gx(c, sy, sx) += row[y * ow + xo];
          }
        }
      }
    }
  }
  return gx;
}

void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(const Tensor& activated, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(activated.data[i] > 0.0)) grad.data[i] = 0.0;
  }
}

Eigen::VectorXd dense_forward(const Dense& layer, std::span<const double> params, const Eigen::VectorXd& x) {
  const Eigen::Map<const RowMatrix> w(params.data() + layer.weight_offset, layer.out, layer.in);
  const Eigen::Map<const Eigen::VectorXd> b(params.data() + layer.bias_offset, layer.out);
  return w * x + b;
}

Eigen::VectorXd dense_backward(const Dense& layer, std::span<const double> params, const Eigen::VectorXd& input,
                               const Eigen::VectorXd& grad_out, std::span<double> grads) {
  const Eigen::Map<const RowMatrix> w(params.data() + layer.weight_offset, layer.out, layer.in);
  Eigen::Map<RowMatrix> gw(grads.data() + layer.weight_offset, layer.out, layer.in);
  Eigen::Map<Eigen::VectorXd> gb(grads.data() + layer.bias_offset, layer.out);
  gw.noalias() += grad_out * input.transpose();
  gb += grad_out;
  return w.transpose() * grad_out;
}

void SgdMomentum::step(std::span<double> params, std::span<const double> grads) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = momentum_ * velocity_[i] - lr_ * grads[i];
    params[i] += velocity_[i];
  }
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void save_blob(const std::filesystem::path& path, std::span<const double> values) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::uint64_t n = values.size();
  out.write(kBlobMagic, sizeof kBlobMagic);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

std::vector<double> load_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("checkpoint not found: " + path.string());
  char magic[sizeof kBlobMagic];
  std::uint64_t n = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::memcmp(magic, kBlobMagic, sizeof magic) != 0) {
    throw IoError("not a checkpoint blob: " + path.string());
  }
  std::vector<double> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint blob: " + path.string());
  return values;
}

}  // namespace scube::nn
