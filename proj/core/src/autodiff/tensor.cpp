#include "ulrn/autodiff/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "ulrn/errors.hpp"

namespace ulrn::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<float> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value->size(), 0.0f);
  return grad;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < node_->shape.size(), ErrorKind::kShape,
          "axis " + std::to_string(axis) + " out of range for " +
              shape_string(node_->shape));
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->value->size(); }

std::span<const float> Tensor::data() const { return *node_->value; }

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<float> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<float>(size(), 0.0f);
  return node_->grad;
}

float Tensor::item() const {
  require(size() == 1, ErrorKind::kContract,
          "item() on non-scalar tensor " + shape_string(shape()));
  return (*node_->value)[0];
}

namespace {

void check_shape(const Shape& shape, std::size_t count) {
  for (std::size_t d : shape) {
    require(d > 0, ErrorKind::kShape,
            "zero-sized dimension in " + shape_string(shape));
  }
  require(numel(shape) == count, ErrorKind::kShape,
          "shape " + shape_string(shape) + " does not hold " +
              std::to_string(count) + " values");
}

// Branch-free scan: an all-ones exponent marks inf or NaN.
void check_finite(std::span<const float> values) {
  std::uint32_t bad = 0;
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    bad |= static_cast<std::uint32_t>((bits & 0x7f800000u) == 0x7f800000u);
  }
  if (bad) fail(ErrorKind::kDivergence, "non-finite value in tensor");
}

}  // namespace

Tensor Graph::constant(Shape shape, std::vector<float> values) {
  return constant(std::move(shape),
                  std::make_shared<std::vector<float>>(std::move(values)));
}

Tensor Graph::constant(Shape shape, std::shared_ptr<std::vector<float>> values) {
  check_shape(shape, values->size());
  auto node = std::make_unique<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.back().get());
}

Tensor Graph::variable(Shape shape, std::vector<float> values) {
  return parameter(std::move(shape),
                   std::make_shared<std::vector<float>>(std::move(values)));
}

Tensor Graph::parameter(Shape shape, std::shared_ptr<std::vector<float>> storage) {
  Tensor t = constant(std::move(shape), std::move(storage));
  t.node_->requires_grad = true;
  return t;
}

Tensor Graph::record(Shape shape, std::vector<float> values, bool requires_grad,
                     std::function<void(const detail::Node&)> backward) {
  require(!consumed_, ErrorKind::kState, "graph already consumed by backward()");
  check_shape(shape, values.size());
  check_finite(values);
  auto node = std::make_unique<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::make_shared<std::vector<float>>(std::move(values));
  node->requires_grad = requires_grad;
  if (requires_grad) node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.back().get());
}

void Graph::backward(const Tensor& loss) {
  require(loss.valid() && &loss.graph() == this, ErrorKind::kContract,
          "loss does not belong to this graph");
  require(loss.size() == 1, ErrorKind::kContract,
          "backward() needs a scalar loss, got " + shape_string(loss.shape()));
  require(!consumed_, ErrorKind::kState,
          "backward() called twice on the same graph");
  require(loss.requires_grad(), ErrorKind::kContract,
          "loss is not connected to any requires_grad tensor");
  consumed_ = true;

  detail::Node* root = loss.node();
  root->grad_buffer()[0] = 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& node = **it;
    if (node.backward && !node.grad.empty()) node.backward(node);
  }
  for (const auto& node : nodes_) {
    if (node->requires_grad && !node->grad.empty()) check_finite(node->grad);
  }
}

}  // namespace ulrn::ad
