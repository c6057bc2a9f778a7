#pragma once

// Dense float64 tensor with a dynamic reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Operations in ops.hpp record
// a backward closure on their result whenever an input requires a gradient
// and grad mode is enabled; the tape is the graph of parent links and is
// released when the last handle to the result goes away.

#include <cstddef>
#include <functional>
#include <new>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace seismo {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Cache-line aligned allocator. Vectorised kernels peel a leading remainder
// whose length depends on the buffer address; fixing the alignment keeps
// the summation order, and so the results, identical from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

namespace detail {

struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this->grad into the parents' grad buffers.
  std::function<void(Node&)> backward;

  Buffer& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Direct write access; intended for leaves (initialisation, optimiser,
  // checkpoint loading). Mutating a recorded intermediate corrupts its tape.
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double at(std::size_t flat_index) const { return node_->data.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  // Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
  // intermediate gradients are reset at the start of every sweep.
  void backward() const;

  // Same values, no tape, requires_grad = false.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// True when a result computed from `inputs` must be recorded on the tape.
bool should_record(std::initializer_list<const Tensor*> inputs);

// Builds an op result. When `record` is set, the node keeps `parents` alive
// and runs `backward` during the reverse sweep.
Tensor make_result(Shape shape, Buffer data, bool record,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace seismo
