#include <doctest.h>

#include <cmath>
#include <random>

#include "fd_check.hpp"
#include "suta/errors.hpp"
#include "suta/graph.hpp"

using namespace suta;
using namespace suta::grad;
using suta::testing::check_gradients;
using suta::testing::project;
using suta::testing::random_tensor;

namespace {

constexpr int kInstances = 100;

// Runs `kInstances` finite-difference checks; `make` draws the inputs and the
// builder for one instance.
template <class Make>
void fd_sweep(const char* name, std::uint64_t seed, Make make) {
  std::mt19937_64 rng(seed);
  for (int i = 0; i < kInstances; ++i) {
    auto [inputs, build] = make(rng);
    const auto report = check_gradients(build, inputs);
    INFO(name << " instance " << i << ": " << report.detail);
    REQUIRE(report.ok);
  }
}

std::size_t dim(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

using Instance = std::pair<std::vector<Tensor>, suta::testing::Builder>;

}  // namespace

TEST_SUITE("gradcore") {

TEST_CASE("forward examples") {
  Graph g;
  const auto a = g.input(Tensor(2, 3, 1.0));
  const auto b = g.input(Tensor(3, 4, 2.0));
  const auto m = g.matmul(a, b);
  CHECK(g.value(m).rows == 2);
  CHECK(g.value(m).cols == 4);
  CHECK(g.value(m)(1, 3) == doctest::Approx(6.0));

  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, 3, 5);
  const auto xi = g.input(x);
  CHECK(g.value(g.add(xi, g.input(Tensor::zeros(3, 5)))) == x);

  Tensor wide(1, 21);
  for (std::size_t k = 0; k < 21; ++k) wide.values[k] = -10.0 + static_cast<double>(k);
  const auto round = g.value(g.log(g.exp(g.input(wide))));
  for (std::size_t k = 0; k < 21; ++k) CHECK(std::abs(round.values[k] - wide.values[k]) <= 1e-12);
}

TEST_CASE("log clamps instead of producing NaN") {
  Graph g;
  const auto y = g.log(g.input(Tensor(1, 3, std::vector<double>{0.0, -1.0, 1e-300})));
  for (double v : g.value(y).values) {
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(std::log(1e-12)));
  }
}

TEST_CASE("shape mismatches are contract violations") {
  Graph g;
  const auto a = g.input(Tensor(2, 3));
  const auto b = g.input(Tensor(2, 3));
  CHECK_THROWS_AS(g.matmul(a, b), ContractViolation);
  CHECK_THROWS_AS(g.add(a, g.input(Tensor(3, 2))), ContractViolation);
  CHECK_THROWS_AS(g.concat_rows(a, g.input(Tensor(1, 4))), ContractViolation);
  CHECK_THROWS_AS(g.row_select(a, {2}), ContractViolation);
  CHECK_THROWS_AS(g.backward(a), ContractViolation);
  CHECK_THROWS_AS(g.value(99), ContractViolation);
}

TEST_CASE("backward examples") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(rng, 3, 4);
  Graph g;
  const auto xi = g.input(x, true);
  auto grads = g.backward(g.sum(xi));
  CHECK(grads.at(xi) == Tensor(3, 4, 1.0));

  Graph g2;
  const auto xj = g2.input(x, true);
  grads = g2.backward(g2.sum(g2.multiply(xj, xj)));
  for (std::size_t k = 0; k < x.size(); ++k)
    CHECK(grads.at(xj).values[k] == doctest::Approx(2 * x.values[k]).epsilon(1e-14));
}

TEST_CASE("backward without trainable leaves returns an empty map") {
  Graph g;
  const auto x = g.input(Tensor(2, 2, 1.0));
  const auto loss = g.sum(g.multiply(x, x));
  CHECK(g.backward(loss).empty());
  CHECK(g.value(loss).item() == 4.0);
}

TEST_CASE("gradients accumulate over shared consumers and passes are repeatable") {
  Graph g;
  const auto x = g.input(Tensor(1, 1, 3.0), true);
  const auto loss = g.sum(g.add(g.multiply(x, x), g.scale(x, 5.0)));
  const auto first = g.backward(loss);
  const auto second = g.backward(loss);
  CHECK(first.at(x).item() == doctest::Approx(11.0));
  CHECK(first == second);
}

TEST_CASE("unreached trainable leaves receive zero gradients") {
  Graph g;
  const auto used = g.input(Tensor(1, 2, 1.0), true);
  const auto unused = g.input(Tensor(2, 2, 1.0), true);
  const auto grads = g.backward(g.sum(used));
  CHECK(grads.at(unused) == Tensor(2, 2, 0.0));
}

TEST_CASE("composite matmul-relu-mean matches finite differences") {
  fd_sweep("composite", 11, [](std::mt19937_64& rng) -> Instance {
    auto a = random_tensor(rng, 4, 5);
    auto b = random_tensor(rng, 5, 3);
    return {{a, b}, [](Graph& g, const std::vector<NodeId>& in) {
              return g.mean(g.relu(g.matmul(in[0], in[1])));
            }};
  });
}

TEST_CASE("elementwise ops match finite differences") {
  fd_sweep("matmul", 21, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), k = dim(rng, 1, 4), c = dim(rng, 1, 4);
    auto w = random_tensor(rng, r, c);
    return {{random_tensor(rng, r, k), random_tensor(rng, k, c)},
            [w](Graph& g, const std::vector<NodeId>& in) { return project(g, g.matmul(in[0], in[1]), w); }};
  });
  for (int shape = 0; shape < 4; ++shape) {
    fd_sweep("add/multiply broadcast", 30 + shape, [shape](std::mt19937_64& rng) -> Instance {
      const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
      const std::size_t br = shape == 0 || shape == 2 ? r : 1;
      const std::size_t bc = shape == 0 || shape == 1 ? c : 1;
      auto w = random_tensor(rng, r, c);
      return {{random_tensor(rng, r, c), random_tensor(rng, br, bc)},
              [w](Graph& g, const std::vector<NodeId>& in) {
                return project(g, g.add(g.multiply(in[0], in[1]), g.scale(in[1], 0.5)), w);
              }};
    });
  }
  fd_sweep("negate/scale/exp", 41, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
    auto w = random_tensor(rng, r, c);
    return {{random_tensor(rng, r, c)}, [w](Graph& g, const std::vector<NodeId>& in) {
              return project(g, g.exp(g.scale(g.negate(in[0]), 0.7)), w);
            }};
  });
  fd_sweep("log", 42, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
    Tensor x = random_tensor(rng, r, c);
    for (double& v : x.values) v = 0.2 + std::abs(v);
    auto w = random_tensor(rng, r, c);
    return {{x}, [w](Graph& g, const std::vector<NodeId>& in) { return project(g, g.log(in[0]), w); }};
  });
  fd_sweep("relu", 43, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
    Tensor x = random_tensor(rng, r, c);
    for (double& v : x.values)
      if (std::abs(v) < 1e-2) v = 0.5;  // keep away from the kink
    auto w = random_tensor(rng, r, c);
    return {{x}, [w](Graph& g, const std::vector<NodeId>& in) { return project(g, g.relu(in[0]), w); }};
  });
  fd_sweep("gelu", 44, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
    auto w = random_tensor(rng, r, c);
    return {{random_tensor(rng, r, c, 2.0)},
            [w](Graph& g, const std::vector<NodeId>& in) { return project(g, g.gelu(in[0]), w); }};
  });
}

TEST_CASE("reductions and reshapes match finite differences") {
  fd_sweep("row_mean/row_variance", 51, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), c = dim(rng, 1, 5);
    auto w1 = random_tensor(rng, r, 1);
    auto w2 = random_tensor(rng, r, 1);
    return {{random_tensor(rng, r, c)}, [w1, w2](Graph& g, const std::vector<NodeId>& in) {
              return g.add(project(g, g.row_mean(in[0]), w1), project(g, g.row_variance(in[0]), w2));
            }};
  });
  fd_sweep("sum/mean", 52, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
    return {{random_tensor(rng, r, c)}, [](Graph& g, const std::vector<NodeId>& in) {
              return g.add(g.sum(g.multiply(in[0], in[0])), g.scale(g.mean(g.exp(in[0])), 3.0));
            }};
  });
  fd_sweep("transpose", 53, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), c = dim(rng, 1, 4);
    auto w = random_tensor(rng, c, r);
    return {{random_tensor(rng, r, c)},
            [w](Graph& g, const std::vector<NodeId>& in) { return project(g, g.transpose(in[0]), w); }};
  });
  fd_sweep("row_select", 54, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 5), c = dim(rng, 1, 4);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < r; ++i)
      if (rng() % 2) rows.push_back(i);
    if (rows.empty()) rows.push_back(r - 1);
    rows.push_back(rows.front());  // duplicates accumulate
    auto w = random_tensor(rng, rows.size(), c);
    return {{random_tensor(rng, r, c)}, [w, rows](Graph& g, const std::vector<NodeId>& in) {
              return project(g, g.row_select(in[0], rows), w);
            }};
  });
  fd_sweep("concat_rows", 55, [](std::mt19937_64& rng) -> Instance {
    const auto r1 = dim(rng, 1, 3), r2 = dim(rng, 1, 3), c = dim(rng, 1, 4);
    auto w = random_tensor(rng, r1 + r2, c);
    return {{random_tensor(rng, r1, c), random_tensor(rng, r2, c)},
            [w](Graph& g, const std::vector<NodeId>& in) { return project(g, g.concat_rows(in[0], in[1]), w); }};
  });
  fd_sweep("softmax_rows/log_softmax_rows", 56, [](std::mt19937_64& rng) -> Instance {
    const auto r = dim(rng, 1, 4), c = dim(rng, 2, 5);
    auto w1 = random_tensor(rng, r, c);
    auto w2 = random_tensor(rng, r, c);
    return {{random_tensor(rng, r, c, 2.0)}, [w1, w2](Graph& g, const std::vector<NodeId>& in) {
              return g.add(project(g, g.softmax_rows(in[0]), w1), project(g, g.log_softmax_rows(in[0]), w2));
            }};
  });
}

TEST_CASE("conv1d") {
  SUBCASE("output length formula") {
    CHECK(conv1d_output_length(10, 3, 1, 1) == 10);
    CHECK(conv1d_output_length(10, 3, 2, 1) == 5);
    CHECK(conv1d_output_length(10, 3, 1, 0) == 8);
    CHECK(conv1d_output_length(2, 5, 1, 0) == 0);
  }
  SUBCASE("hand example") {
    // x = [1, 2, 3], w = [1, 0, -1] (K=3, Cin=1, Cout=1), padding 1.
    Graph g;
    const auto y = g.conv1d(g.input(Tensor(3, 1, std::vector<double>{1, 2, 3})),
                            g.input(Tensor(3, 1, std::vector<double>{1, 0, -1})),
                            g.input(Tensor(1, 1, 0.5)), 1, 1);
    CHECK(g.value(y) == Tensor(3, 1, std::vector<double>{-1.5, -1.5, 2.5}));
  }
  SUBCASE("finite differences") {
    fd_sweep("conv1d", 61, [](std::mt19937_64& rng) -> Instance {
      const auto k = dim(rng, 1, 3), cin = dim(rng, 1, 3), cout = dim(rng, 1, 3);
      const auto stride = dim(rng, 1, 2), pad = dim(rng, 0, 1);
      const auto t = dim(rng, k, 6);
      const auto out = conv1d_output_length(t, k, stride, pad);
      auto w = random_tensor(rng, out, cout);
      return {{random_tensor(rng, t, cin), random_tensor(rng, k * cin, cout), random_tensor(rng, 1, cout)},
              [w, stride, pad](Graph& g, const std::vector<NodeId>& in) {
                return project(g, g.conv1d(in[0], in[1], in[2], stride, pad), w);
              }};
    });
  }
}

TEST_CASE("layer_norm") {
  SUBCASE("constant row maps to beta") {
    Graph g;
    const auto y = g.layer_norm(g.input(Tensor(1, 4, 3.0)), g.input(Tensor(1, 4, 1.0)),
                                g.input(Tensor(1, 4, 0.0)), 1e-5);
    for (double v : g.value(y).values) CHECK(v == 0.0);
  }
  SUBCASE("standardized row is unchanged as eps vanishes") {
    Graph g;
    const auto y = g.layer_norm(g.input(Tensor(1, 2, std::vector<double>{1, -1})),
                                g.input(Tensor(1, 2, 1.0)), g.input(Tensor(1, 2, 0.0)), 1e-14);
    CHECK(g.value(y)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.value(y)(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("mean of output on 3x6 inputs") {
    fd_sweep("layer_norm mean", 71, [](std::mt19937_64& rng) -> Instance {
      return {{random_tensor(rng, 3, 6), random_tensor(rng, 1, 6), random_tensor(rng, 1, 6)},
              [](Graph& g, const std::vector<NodeId>& in) {
                return g.mean(g.layer_norm(in[0], in[1], in[2], 1e-5));
              }};
    });
  }
  SUBCASE("random projections of random shapes") {
    fd_sweep("layer_norm", 72, [](std::mt19937_64& rng) -> Instance {
      const auto r = dim(rng, 1, 4), c = dim(rng, 2, 6);
      auto w = random_tensor(rng, r, c);
      return {{random_tensor(rng, r, c, 1.5), random_tensor(rng, 1, c), random_tensor(rng, 1, c)},
              [w](Graph& g, const std::vector<NodeId>& in) {
                return project(g, g.layer_norm(in[0], in[1], in[2], 1e-5), w);
              }};
    });
  }
}

TEST_CASE("repeated forward and backward is bit-identical") {
  std::mt19937_64 rng(81);
  const Tensor x = random_tensor(rng, 5, 4);
  const Tensor w = random_tensor(rng, 12, 3);
  const Tensor b = random_tensor(rng, 1, 3);
  auto run = [&] {
    Graph g;
    const auto xi = g.input(x, true);
    const auto wi = g.input(w, true);
    const auto y = g.gelu(g.conv1d(xi, wi, g.input(b), 1, 1));
    const auto loss = g.mean(g.log_softmax_rows(y));
    return std::make_pair(g.value(loss), g.backward(loss));
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
