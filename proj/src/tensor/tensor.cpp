#include "tensor/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace advpaint {

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    require(e > 0, ErrorCode::kDimension, "zero extent in shape " + shape_str(shape));
    require(n <= std::numeric_limits<std::size_t>::max() / e, ErrorCode::kSizeOverflow,
            "shape too large: " + shape_str(shape));
    n *= e;
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  require(!shape_.empty(), ErrorCode::kDimension, "tensor needs at least one extent");
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, const std::vector<double>& data)
    : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}

Tensor::Tensor(Shape shape, std::initializer_list<double> data)
    : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}

Tensor::Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
  require(!shape_.empty(), ErrorCode::kDimension, "tensor needs at least one extent");
  require(shape_numel(shape_) == data_.size(), ErrorCode::kDimension,
          "data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_str(shape_));
}

double Tensor::item() const {
  require(data_.size() == 1, ErrorCode::kContract,
          "item() on non-scalar tensor " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == data_.size(), ErrorCode::kDimension,
          "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  // v - v is 0 for finite v and NaN otherwise; the Eigen reduction vectorizes.
  const Eigen::Map<const Eigen::ArrayXd> a(data_.data(), static_cast<Eigen::Index>(data_.size()));
  return (a - a).sum() == 0.0;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorCode::kDimension,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

double squared_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s;
}

}  // namespace advpaint
