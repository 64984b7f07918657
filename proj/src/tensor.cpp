#include "blurvid/tensor.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

namespace blurvid {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor() : shape_{0}, data_(std::make_shared<const std::vector<T>>()) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  if (shape_.size() > 4) throw ShapeError("tensor rank > 4: " + to_string(shape_));
  for (int d : shape_) {
    if (d < 0) throw ShapeError("negative extent in shape " + to_string(shape_));
  }
  if (numel(shape_) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("shape " + to_string(shape_) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<T>>(std::move(values));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape) {
  auto n = static_cast<std::size_t>(numel(shape));
  return BasicTensor(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  auto n = static_cast<std::size_t>(numel(shape));
  return BasicTensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
int BasicTensor<T>::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (data_->size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape_));
  return (*data_)[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  BasicTensor out;
  out.shape_ = shape_;
  out.data_ = data_;
  return out;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshape(Shape shape) const {
  if (numel(shape) != size()) {
    throw ShapeError("reshape " + to_string(shape_) + " -> " + to_string(shape));
  }
  if (!tracked()) {
    BasicTensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }
  std::vector<T> copy(*data_);
  return tape_->record("reshape", {this}, std::move(shape), std::move(copy),
                       [in = node_](std::span<const T> g, GradSink<T>& sink) {
                         if (!sink.wants(in)) return;
                         auto dst = sink.slot(in);
                         for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                       });
}

template <typename T>
template <typename U>
BasicTensor<U> BasicTensor<T>::cast() const {
  std::vector<U> out(data_->begin(), data_->end());
  return BasicTensor<U>(shape_, std::move(out));
}

template <typename T>
const BasicTensor<T>& Gradients<T>::at(int node) const {
  auto it = grads_.find(node);
  if (it == grads_.end()) throw Error("no gradient recorded for node " + std::to_string(node));
  return it->second;
}

template <typename T>
BasicTensor<T> Gradients<T>::of(const BasicTensor<T>& t) const {
  if (!t.tracked()) throw Error("gradient requested for a detached tensor");
  auto it = grads_.find(t.node());
  if (it == grads_.end()) return BasicTensor<T>::zeros(t.shape());
  return it->second;
}

template <typename T>
BasicTensor<T> Tape<T>::watch(const BasicTensor<T>& value) {
  BasicTensor<T> out;
  out.shape_ = value.shape();
  out.data_ = value.storage();
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{"leaf", {}, value.shape(), {}});
  return out;
}

template <typename T>
BasicTensor<T> Tape<T>::record(std::string_view op,
                               std::initializer_list<const BasicTensor<T>*> inputs, Shape shape,
                               std::vector<T> values, BackwardFn backward) {
  return record(op, std::vector<const BasicTensor<T>*>(inputs), std::move(shape),
                std::move(values), std::move(backward));
}

template <typename T>
BasicTensor<T> Tape<T>::record(std::string_view op,
                               const std::vector<const BasicTensor<T>*>& inputs, Shape shape,
                               std::vector<T> values, BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  for (const auto* in : inputs) {
    if (in->tracked() && in->tape() != this) {
      throw Error(std::string(op) + ": inputs recorded on different tapes");
    }
    node.inputs.push_back(in->tracked() ? in->node() : -1);
  }
  node.shape = shape;
  node.backward = std::move(backward);
  BasicTensor<T> out(std::move(shape), std::move(values));
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
  return out;
}

namespace {

template <typename T>
class SlotSink final : public GradSink<T> {
 public:
  SlotSink(const std::vector<typename Tape<T>::Node>& nodes, int limit,
           std::vector<std::optional<std::vector<T>>>& slots)
      : nodes_(nodes), limit_(limit), slots_(slots) {}

  bool wants(int node) const override { return node >= 0 && node < limit_; }

  std::span<T> slot(int node) override {
    auto& s = slots_[static_cast<std::size_t>(node)];
    if (!s) s.emplace(static_cast<std::size_t>(numel(nodes_[static_cast<std::size_t>(node)].shape)), T(0));
    return {s->data(), s->size()};
  }

 private:
  const std::vector<typename Tape<T>::Node>& nodes_;
  int limit_;
  std::vector<std::optional<std::vector<T>>>& slots_;
};

}  // namespace

template <typename T>
Gradients<T> Tape<T>::backward(const BasicTensor<T>& loss) const {
  if (!loss.tracked() || loss.tape() != this) throw Error("backward: loss is not recorded on this tape");
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));

  const int root = loss.node();
  std::vector<std::optional<std::vector<T>>> slots(static_cast<std::size_t>(root) + 1);
  slots[static_cast<std::size_t>(root)].emplace(1, T(1));
  SlotSink<T> sink(nodes_, root + 1, slots);

  // Nodes are appended in evaluation order, so a reverse index sweep is a
  // reverse topological order.
  for (int id = root; id >= 0; --id) {
    auto& g = slots[static_cast<std::size_t>(id)];
    if (!g) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward) n.backward(std::span<const T>(g->data(), g->size()), sink);
  }

  std::unordered_map<int, BasicTensor<T>> grads;
  for (int id = 0; id <= root; ++id) {
    auto& g = slots[static_cast<std::size_t>(id)];
    if (g) grads.emplace(id, BasicTensor<T>(nodes_[static_cast<std::size_t>(id)].shape, std::move(*g)));
  }
  return Gradients<T>(std::move(grads));
}

template <typename T>
Tape<T>* common_tape(const std::vector<const BasicTensor<T>*>& inputs) {
  Tape<T>* tape = nullptr;
  for (const auto* in : inputs) {
    if (!in->tracked()) continue;
    if (tape && in->tape() != tape) throw Error("inputs recorded on different tapes");
    tape = in->tape();
  }
  return tape;
}

template <typename T>
Tape<T>* common_tape(std::initializer_list<const BasicTensor<T>*> inputs) {
  return common_tape(std::vector<const BasicTensor<T>*>(inputs));
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;
template BasicTensor<double> BasicTensor<float>::cast<double>() const;
template BasicTensor<float> BasicTensor<double>::cast<float>() const;
template BasicTensor<float> BasicTensor<float>::cast<float>() const;
template BasicTensor<double> BasicTensor<double>::cast<double>() const;
template Tape<float>* common_tape(std::initializer_list<const BasicTensor<float>*>);
template Tape<double>* common_tape(std::initializer_list<const BasicTensor<double>*>);
template Tape<float>* common_tape(const std::vector<const BasicTensor<float>*>&);
template Tape<double>* common_tape(const std::vector<const BasicTensor<double>*>&);

}  // namespace blurvid
