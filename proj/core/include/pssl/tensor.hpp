#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pssl {

// Dense row-major tensor of doubles. Rank 0 (scalar) through rank 3 are used.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor from_row(const std::vector<double>& values);         // shape {n}
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);  // {m, n}

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const noexcept { return data_.size(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;

  void fill(double v);

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Throws ShapeError naming `where` unless the shapes match.
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);
// Throws NumericsError naming `where` if any element is NaN or Inf.
void require_finite(const Tensor& t, const char* where);

// Opt-in glibc malloc tuning for training workloads: raises the mmap and
// trim thresholds so large tensor buffers are recycled by the heap instead
// of being handed back to the kernel after every step (the page faults on
// re-touch otherwise dominate elementwise op cost). Call once from main();
// results are unaffected, only speed. No-op on other libcs.
void tune_allocator() noexcept;

}  // namespace pssl
