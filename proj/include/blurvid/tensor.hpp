#pragma once

// Dense tensors and the reverse-mode differentiation tape.
//
// A tensor is an immutable value: a shape of up to four extents and a
// row-major payload shared between copies. Tensors produced from inputs that
// live on a Tape carry a node id on that tape; everything else is detached.
// Image-like data uses the (batch, channels, height, width) convention.
//
// Both the tensor and the tape are templated on the scalar type. Training
// runs in float; the gradient checker instantiates the same kernels in double.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace blurvid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class Tape;

template <typename T>
class BasicTensor {
 public:
  BasicTensor();
  BasicTensor(Shape shape, std::vector<T> values);

  static BasicTensor zeros(Shape shape);
  static BasicTensor full(Shape shape, T value);
  static BasicTensor scalar(T value);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(data_->size()); }

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  const std::vector<T>& values() const& { return *data_; }
  // Copy out of temporaries so `for (x : make().values())` stays valid.
  std::vector<T> values() && { return *data_; }
  std::shared_ptr<const std::vector<T>> storage() const { return data_; }
  T item() const;
  T operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }
  bool tracked() const { return tape_ != nullptr; }
  BasicTensor detach() const;

  // Same payload viewed under a different shape of equal element count.
  BasicTensor reshape(Shape shape) const;

  template <typename U>
  BasicTensor<U> cast() const;

 private:
  friend class Tape<T>;

  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Gradient slots handed to backward rules. Slots are allocated lazily and
// only for nodes that live on the tape.
template <typename T>
class GradSink {
 public:
  virtual ~GradSink() = default;
  virtual bool wants(int node) const = 0;
  virtual std::span<T> slot(int node) = 0;
};

template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::unordered_map<int, BasicTensor<T>> grads) : grads_(std::move(grads)) {}

  bool contains(int node) const { return grads_.count(node) != 0; }
  const BasicTensor<T>& at(int node) const;
  // Gradient of the loss with respect to a tensor recorded on the tape.
  // Tensors the loss does not reach get a zero gradient of matching shape.
  BasicTensor<T> of(const BasicTensor<T>& t) const;
  std::size_t size() const { return grads_.size(); }
  const std::unordered_map<int, BasicTensor<T>>& all() const { return grads_; }

 private:
  std::unordered_map<int, BasicTensor<T>> grads_;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const T> grad_out, GradSink<T>& sink)>;

  struct Node {
    std::string op;
    std::vector<int> inputs;
    Shape shape;
    BackwardFn backward;  // empty for leaves
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a value as a differentiable leaf.
  BasicTensor<T> watch(const BasicTensor<T>& value);

  // Records an op whose output is `values`. Inputs that are detached get no
  // gradient; inputs on a different tape are rejected.
  BasicTensor<T> record(std::string_view op, std::initializer_list<const BasicTensor<T>*> inputs,
                        Shape shape, std::vector<T> values, BackwardFn backward);
  BasicTensor<T> record(std::string_view op, const std::vector<const BasicTensor<T>*>& inputs,
                        Shape shape, std::vector<T> values, BackwardFn backward);

  Gradients<T> backward(const BasicTensor<T>& loss) const;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

 private:
  std::vector<Node> nodes_;
};

// Returns the tape shared by the tracked inputs, or nullptr when none is
// tracked. Throws if inputs live on different tapes.
template <typename T>
Tape<T>* common_tape(std::initializer_list<const BasicTensor<T>*> inputs);
template <typename T>
Tape<T>* common_tape(const std::vector<const BasicTensor<T>*>& inputs);

}  // namespace blurvid
