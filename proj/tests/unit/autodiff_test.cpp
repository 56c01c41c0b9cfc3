#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ulrn/autodiff/ops.hpp"
#include "ulrn/errors.hpp"

using namespace ulrn;
using namespace ulrn::ad;
using testing::gradcheck;
using testing::ramp;

namespace {

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor probe(Graph& g, const Tensor& x) {
  return sum(mul(x, g.constant(x.shape(), ramp(x.size(), -1.0f, 1.0f, 7))));
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  const std::vector<Shape> shapes{{3, 4}, {3, 4}};
  const std::vector<std::vector<float>> v{ramp(12, -1, 1, 1), ramp(12, 0.5f, 2, 2)};
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return probe(g, add(x[0], x[1])); }) < 1e-2);
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return probe(g, sub(x[0], x[1])); }) < 1e-2);
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return probe(g, mul(x[0], x[1])); }) < 1e-2);
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return probe(g, exp(x[0])); }) < 1e-2);
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return probe(g, log(x[1])); }) < 1e-2);
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return probe(g, rsqrt(x[1])); }) < 1e-2);
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return probe(g, silu(x[0])); }) < 1e-2);
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return probe(g, gelu(x[0])); }) < 1e-2);
  CHECK(gradcheck(shapes, v, [](Graph& g, auto& x) { return mean(scale(neg(x[0]), 3.0f)); }) < 1e-2);
}

TEST_CASE("matmul, transpose and broadcasting") {
  CHECK(gradcheck({{3, 4}, {4, 5}}, {ramp(12, -1, 1, 1), ramp(20, -1, 1, 2)},
                  [](Graph& g, auto& x) { return probe(g, matmul(x[0], x[1])); }) < 1e-2);
  CHECK(gradcheck({{3, 4}}, {ramp(12, -1, 1, 3)},
                  [](Graph& g, auto& x) { return probe(g, transpose(x[0])); }) < 1e-2);
  CHECK(gradcheck({{3, 4}, {4}}, {ramp(12, -1, 1, 4), ramp(4, -1, 1, 5)},
                  [](Graph& g, auto& x) { return probe(g, add(x[0], x[1])); }) < 1e-2);
  CHECK(gradcheck({{4}}, {ramp(4, -1, 1, 6)},
                  [](Graph& g, auto& x) { return probe(g, broadcast_to(x[0], {2, 3, 4})); }) < 1e-2);
}

TEST_CASE("normalization, softmax and attention primitives") {
  CHECK(gradcheck({{3, 5}}, {ramp(15, -2, 2, 1)},
                  [](Graph& g, auto& x) { return probe(g, softmax(x[0])); }) < 1e-2);
  CHECK(gradcheck({{3, 5}}, {ramp(15, -2, 2, 2)},
                  [](Graph& g, auto& x) { return probe(g, softmax(x[0], 0)); }) < 1e-2);
  CHECK(gradcheck({{4, 4}}, {ramp(16, -2, 2, 3)},
                  [](Graph& g, auto& x) { return probe(g, causal_softmax(x[0])); }) < 1e-2);
  CHECK(gradcheck({{3, 6}, {6}}, {ramp(18, -2, 2, 4), ramp(6, 0.5f, 1.5f, 5)},
                  [](Graph& g, auto& x) { return probe(g, rms_norm(x[0], x[1])); }) < 1e-2);
  CHECK(gradcheck({{3, 8}}, {ramp(24, -1, 1, 6)},
                  [](Graph& g, auto& x) { return probe(g, rope(x[0], 2, 10000.0f, 1)); }) < 1e-2);
}

TEST_CASE("indexing ops route gradients to the selected entries") {
  const std::vector<std::int32_t> ids{2, 0, 2};
  CHECK(gradcheck({{4, 3}}, {ramp(12, -1, 1, 1)},
                  [&](Graph& g, auto& x) { return probe(g, embedding(x[0], ids)); }) < 1e-2);
  CHECK(gradcheck({{3, 4}}, {ramp(12, -1, 1, 2)},
                  [&](Graph& g, auto& x) { return probe(g, pick(x[0], ids)); }) < 1e-2);
  CHECK(gradcheck({{4, 6}}, {ramp(24, -1, 1, 3)}, [](Graph& g, auto& x) {
          const Tensor parts[] = {slice_cols(x[0], 0, 2), slice_cols(x[0], 4, 6)};
          return probe(g, concat_rows(std::span<const Tensor>(parts)));
        }) < 1e-2);
  CHECK(gradcheck({{4, 6}}, {ramp(24, -1, 1, 4)}, [](Graph& g, auto& x) {
          const Tensor parts[] = {slice_rows(x[0], 1, 3), slice_rows(x[0], 0, 2)};
          return probe(g, concat_cols(std::span<const Tensor>(parts)));
        }) < 1e-2);
  CHECK(gradcheck({{2, 6}}, {ramp(12, -1, 1, 5)},
                  [](Graph& g, auto& x) { return probe(g, reshape(x[0], {3, 4})); }) < 1e-2);
}

TEST_CASE("causal softmax masks the upper triangle exactly") {
  Graph g;
  const Tensor p = causal_softmax(g.variable({3, 3}, ramp(9, -1, 1)));
  const auto d = p.data();
  CHECK(d[1] == 0.0f);
  CHECK(d[2] == 0.0f);
  CHECK(d[5] == 0.0f);
  CHECK(d[0] == doctest::Approx(1.0));
  CHECK(d[3] + d[4] == doctest::Approx(1.0));
}

TEST_CASE("log clamps at the epsilon floor with zero gradient below it") {
  Graph g;
  const Tensor x = g.variable({2}, {0.0f, 1e-20f});
  const Tensor y = sum(log(x));
  CHECK(y.item() == doctest::Approx(2 * std::log(1e-12)).epsilon(1e-5));
  g.backward(y);
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 0.0f);
}

TEST_CASE("gradients accumulate over shared subexpressions") {
  Graph g;
  const Tensor x = g.variable({1}, {3.0f});
  const Tensor y = sum(add(mul(x, x), x));  // x^2 + x
  g.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("contract violations raise typed errors") {
  Graph g;
  const Tensor a = g.variable({2, 3}, ramp(6, -1, 1));
  const Tensor b = g.variable({2, 3}, ramp(6, -1, 1));
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kState;
  };
  CHECK(kind_of([&] { matmul(a, b); }) == ErrorKind::kShape);
  CHECK(kind_of([&] { g.backward(a); }) == ErrorKind::kContract);
  CHECK(kind_of([&] { g.variable({2, 2}, {1.0f}); }) == ErrorKind::kShape);
  const Tensor s = sum(a);
  g.backward(s);
  CHECK(kind_of([&] { g.backward(s); }) == ErrorKind::kState);
}
