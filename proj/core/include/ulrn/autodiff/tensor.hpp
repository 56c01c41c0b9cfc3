#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ulrn::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Graph;

namespace detail {

struct Node {
  Shape shape;
  // Shared so that parameter leaves can alias model storage without a copy.
  std::shared_ptr<std::vector<float>> value;
  std::vector<float> grad;  // empty until something flows into it
  bool requires_grad = false;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(const Node& self)> backward;

  std::span<float> grad_buffer();  // allocates zeros on first use
};

}  // namespace detail

// Lightweight handle to a node owned by a Graph. A Tensor is only valid while
// its Graph is alive; handles are cheap to copy.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const float> data() const;
  bool requires_grad() const;
  bool has_grad() const;
  // Gradient of the last backward() pass; zeros if nothing reached this node.
  std::vector<float> grad() const;
  float item() const;

  Graph& graph() const { return *graph_; }
  detail::Node* node() const { return node_; }

 private:
  friend class Graph;
  Tensor(Graph* graph, detail::Node* node) : graph_(graph), node_(node) {}

  Graph* graph_ = nullptr;
  detail::Node* node_ = nullptr;
};

// Tape of operation records in creation order, which is a topological order
// of the computation. One graph is built per forward pass and consumed by a
// single backward() call.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor constant(Shape shape, std::vector<float> values);
  Tensor constant(Shape shape, std::shared_ptr<std::vector<float>> values);
  Tensor variable(Shape shape, std::vector<float> values);
  // requires_grad leaf that reads `storage` in place; gradients land in the
  // graph, never in the storage.
  Tensor parameter(Shape shape, std::shared_ptr<std::vector<float>> storage);

  // Records an op result. `backward` is dropped when no input needs a gradient.
  Tensor record(Shape shape, std::vector<float> values, bool requires_grad,
                std::function<void(const detail::Node&)> backward);

  void backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<detail::Node>> nodes_;
  bool consumed_ = false;
};

}  // namespace ulrn::ad
