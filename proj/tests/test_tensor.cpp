#include <doctest.h>

#include <cmath>

#include "common.hpp"
#include "tensor.hpp"

using namespace gimo;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

// Independent triple-loop matmul oracle.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (int l = 0; l < a.cols(); ++l) s += a.at(i, l) * b.at(l, j);
      c.at(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("tensor shape and data invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
  CHECK(t.all_finite());
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("matmul identity and scalar cases") {
  Tape tp;
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Rng rng(11);
  Tensor b = random_tensor({3, 4}, rng);
  Var r = tp.matmul(tp.constant(eye), tp.constant(b));
  for (int64_t i = 0; i < b.size(); ++i) CHECK(tp.value(r)[i] == b[i]);

  Var s = tp.matmul(tp.constant(Tensor({1, 1}, {2.0})), tp.constant(Tensor({1, 1}, {3.0})));
  CHECK(tp.value(s).item() == 6.0);

  CHECK_THROWS_WITH_AS(tp.matmul(tp.constant(Tensor({2, 3})), tp.constant(Tensor({2, 3}))),
                       doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor expect = matmul_oracle(a, b);
    Tape tp;
    const Tensor& got = tp.value(tp.matmul(tp.constant(a), tp.constant(b)));
    for (int64_t i = 0; i < expect.size(); ++i) CHECK(std::fabs(got[i] - expect[i]) < 1e-12);
  }
}

TEST_CASE("softmax examples") {
  Tape tp;
  SUBCASE("uniform input") {
    const Tensor& y = tp.value(tp.softmax(tp.constant(Tensor({3}, {4.2, 4.2, 4.2})), 0));
    for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
  SUBCASE("log-two spacing") {
    const Tensor& y = tp.value(tp.softmax(tp.constant(Tensor({2}, {0.0, std::log(2.0)})), 0));
    CHECK(y[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  }
  SUBCASE("stabilized against overflow") {
    const Tensor& y = tp.value(tp.softmax(tp.constant(Tensor({2}, {1000.0, 0.0})), 0));
    CHECK(std::fabs(y[0] - 1.0) < 1e-9);
    CHECK(std::fabs(y[1]) < 1e-9);
    CHECK(tp.value(tp.softmax(tp.constant(Tensor({2}, {1000.0, 0.0})), 0)).all_finite());
  }
  SUBCASE("rows sum to one across axes") {
    Rng rng(3);
    Tensor x = random_tensor({4, 5}, rng, 100.0);
    for (int axis : {0, 1}) {
      const Tensor& y = tp.value(tp.softmax(tp.constant(x), axis));
      int nslices = axis == 1 ? 4 : 5;
      for (int s = 0; s < nslices; ++s) {
        double total = 0.0;
        for (int i = 0; i < (axis == 1 ? 5 : 4); ++i)
          total += axis == 1 ? y.at(s, i) : y.at(i, s);
        CHECK(std::fabs(total - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("elementwise ops") {
  Tape tp;
  Rng rng(5);
  Tensor x = random_tensor({2, 3}, rng);
  SUBCASE("add zero is identity") {
    const Tensor& y = tp.value(tp.add(tp.constant(x), tp.constant(Tensor({2, 3}))));
    for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("relu clamps") {
    const Tensor& y = tp.value(tp.relu(tp.constant(Tensor({2}, {-1.0, 2.0}))));
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 2.0);
  }
  SUBCASE("mul gradient is the product rule") {
    Var a = tp.leaf(Tensor::scalar(2.0), true);
    Var b = tp.leaf(Tensor::scalar(3.0), true);
    Var y = tp.mul(a, b);
    tp.backward(y);
    CHECK(tp.grad(a)[0] == 3.0);
    CHECK(tp.grad(b)[0] == 2.0);
  }
  SUBCASE("leading-1 broadcast add") {
    Tensor bias({1, 3}, {1.0, 2.0, 3.0});
    Var y = tp.add(tp.constant(x), tp.constant(bias));
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) CHECK(tp.value(y).at(r, c) == x.at(r, c) + bias[c]);
  }
  SUBCASE("incompatible shapes are rejected") {
    CHECK_THROWS_AS(tp.add(tp.constant(Tensor({2, 3})), tp.constant(Tensor({3, 2}))),
                    DimensionError);
    CHECK_THROWS_AS(tp.mul(tp.constant(Tensor({2, 3})), tp.constant(Tensor({2, 2}))),
                    DimensionError);
  }
}

TEST_CASE("layer_norm examples") {
  Tape tp;
  Tensor gain = Tensor::full({4}, 1.0);
  Tensor bias({4});
  SUBCASE("constant row maps to zeros") {
    const Tensor& y = tp.value(
        tp.layer_norm(tp.constant(Tensor({1, 4}, {5.0, 5.0, 5.0, 5.0})), tp.constant(gain),
                      tp.constant(bias)));
    for (int i = 0; i < 4; ++i) CHECK(y[i] == 0.0);
  }
  SUBCASE("unit-variance row is preserved") {
    const Tensor& y = tp.value(tp.layer_norm(tp.constant(Tensor({1, 2}, {1.0, -1.0})),
                                             tp.constant(Tensor::full({2}, 1.0)),
                                             tp.constant(Tensor({2}))));
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("row statistics on random input") {
    Rng rng(17);
    Tensor x = random_tensor({5, 8}, rng, 3.0);
    const Tensor& y =
        tp.value(tp.layer_norm(tp.constant(x), tp.constant(Tensor::full({8}, 1.0)),
                               tp.constant(Tensor({8}))));
    for (int r = 0; r < 5; ++r) {
      double mean = 0.0, var = 0.0;
      for (int c = 0; c < 8; ++c) mean += y.at(r, c);
      mean /= 8;
      for (int c = 0; c < 8; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
      var /= 8;
      CHECK(std::fabs(mean) < 1e-12);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
}

TEST_CASE("backward basics") {
  SUBCASE("root leaf has unit gradient") {
    Tape tp;
    Var x = tp.leaf(Tensor::scalar(4.0), true);
    tp.backward(x);
    CHECK(tp.grad(x)[0] == 1.0);
  }
  SUBCASE("non-scalar root rejected") {
    Tape tp;
    Var x = tp.leaf(Tensor({2, 2}), true);
    CHECK_THROWS_AS(tp.backward(x), ContractError);
  }
  SUBCASE("accumulation on shared input") {
    Tape tp;
    Var x = tp.leaf(Tensor::scalar(3.0), true);
    Var y = tp.add(x, x);
    tp.backward(y);
    CHECK(tp.grad(x)[0] == 2.0);
  }
  SUBCASE("two-layer perceptron matches finite differences") {
    Rng rng(23);
    Tensor w1 = random_tensor({4, 5}, rng, 0.7);
    Tensor w2 = random_tensor({5, 1}, rng, 0.7);
    auto f = [&](Tape& tp, Var in) {
      Var h = tp.relu(tp.matmul(in, tp.constant(w1)));
      return tp.sum(tp.matmul(h, tp.constant(w2)));
    };
    Tensor x = random_tensor({2, 4}, rng);
    auto rep = grad_check(f, x, 1e-5, 1e-4);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("grad_check examples") {
  Rng rng(31);
  SUBCASE("sum has exact unit gradient") {
    auto rep = grad_check([](Tape& tp, Var x) { return tp.sum(x); }, random_tensor({3, 3}, rng));
    CHECK(rep.pass);
    CHECK(rep.max_abs_err < 1e-10);
  }
  SUBCASE("squared norm") {
    auto rep = grad_check([](Tape& tp, Var x) { return tp.sum(tp.mul(x, x)); },
                          random_tensor({6}, rng));
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-6);
  }
  SUBCASE("non-finite evaluation is reported") {
    Tensor x({1}, {std::nan("")});
    CHECK_THROWS_AS(grad_check([](Tape& tp, Var v) { return tp.sum(v); }, x), NumericError);
  }
}

TEST_CASE("gradient fidelity across primitives") {
  Rng rng(101);
  auto check = [&](std::string label, const std::function<Var(Tape&, Var)>& f, Tensor x) {
    auto rep = grad_check(f, x, 1e-5, 1e-4);
    CAPTURE(label);
    CAPTURE(rep.max_rel_err);
    CHECK(rep.pass);
  };
  for (int seed = 0; seed < 5; ++seed) {
    Rng r(1000 + seed);
    Tensor m = random_tensor({3, 4}, r);
    Tensor k = random_tensor({4, 3}, r);
    check("matmul", [&](Tape& tp, Var x) { return tp.sum(tp.matmul(x, tp.constant(k))); }, m);
    check("softmax_mul", [&](Tape& tp, Var x) { return tp.sum(tp.mul(tp.softmax(x, 1), tp.constant(m))); }, m);
    Tensor wts = random_tensor({3, 4}, r);
    check("layer_norm", [&](Tape& tp, Var x) {
      Var y = tp.layer_norm(x, tp.constant(Tensor::full({4}, 1.3)),
                            tp.constant(Tensor::full({4}, 0.2)));
      return tp.sum(tp.mul(y, tp.constant(wts)));
    }, m);
    check("abs", [&](Tape& tp, Var x) { return tp.sum(tp.abs_op(x)); }, m);
    check("tanh", [&](Tape& tp, Var x) { return tp.sum(tp.tanh_op(x)); }, m);
    check("transpose_relu", [&](Tape& tp, Var x) { return tp.sum(tp.transpose(tp.relu(x))); }, m);
    check("slice_cols", [&](Tape& tp, Var x) { return tp.sum(tp.slice_cols(x, 1, 3)); }, m);
    check("gather_rows", [&](Tape& tp, Var x) { return tp.sum(tp.gather_rows(x, {2, 0, 2})); }, m);
    check("segment_max", [&](Tape& tp, Var x) { return tp.sum(tp.segment_max_rows(x, 3)); },
          random_tensor({6, 2}, r));
    check("max_rows", [&](Tape& tp, Var x) { return tp.sum(tp.max_rows(x)); }, m);
    check("tile_rows", [&](Tape& tp, Var x) { return tp.sum(tp.tile_rows(x, 4)); }, random_tensor({1, 5}, r));
    check("concat", [&](Tape& tp, Var x) {
      return tp.sum(tp.concat({x, tp.constant(m)}, 0));
    }, random_tensor({2, 4}, r));
    check("weighted_gather", [&](Tape& tp, Var x) {
      std::vector<InterpEntry> st(2);
      st[0].idx = {0, 1, 2};
      st[0].w = {0.5, 0.25, 0.25};
      st[1].idx = {2, 0, 0};
      st[1].w = {1.0, 0.0, 0.0};
      return tp.sum(tp.weighted_gather_rows(x, st));
    }, m);
    Tensor aa = random_tensor({4, 3}, r, 2.0);
    check("canon", [&](Tape& tp, Var x) { return tp.sum(tp.canon_rows(x)); }, aa);
  }
}

TEST_CASE("operations are deterministic") {
  Rng rng(77);
  Tensor a = random_tensor({8, 8}, rng);
  Tensor b = random_tensor({8, 8}, rng);
  Tape t1, t2;
  const Tensor& r1 = t1.value(t1.softmax(t1.matmul(t1.constant(a), t1.constant(b)), 1));
  const Tensor& r2 = t2.value(t2.softmax(t2.matmul(t2.constant(a), t2.constant(b)), 1));
  for (int64_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}
