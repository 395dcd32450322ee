#include "tkg/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tkg::nn {

Tensor& ParameterSet::add(std::string name, std::size_t rows, std::size_t cols) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  auto& t = tensors_.emplace_back();
  t.name = std::move(name);
  t.rows = rows;
  t.cols = cols;
  t.value.assign(rows * cols, 0.0);
  t.grad.assign(rows * cols, 0.0);
  return t;
}

Tensor& ParameterSet::get(const std::string& name) {
  for (auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("no parameter " + name);
}

const Tensor& ParameterSet::get(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const Tensor& t) { return t.name == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

void init_normal(Tensor& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.value) v = dist(rng);
}

void init_xavier(Tensor& t, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& v : t.value) v = dist(rng);
}

}  // namespace tkg::nn
