#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tkg::nn {

/// Dense row-major parameter matrix with its gradient accumulator.
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
  std::span<double> row(std::size_t r) { return {value.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {value.data() + r * cols, cols}; }
};

/// Named parameter tensors. References stay valid as tensors are added.
class ParameterSet {
 public:
  Tensor& add(std::string name, std::size_t rows, std::size_t cols);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::deque<Tensor>& tensors() { return tensors_; }
  const std::deque<Tensor>& tensors() const { return tensors_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::deque<Tensor> tensors_;
};

/// N(0, stddev^2) entries.
void init_normal(Tensor& t, double stddev, std::mt19937_64& rng);
/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
void init_xavier(Tensor& t, std::mt19937_64& rng);

}  // namespace tkg::nn
