#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "granet/checkpoint.hpp"
#include "granet/nn.hpp"
#include "granet/rng.hpp"
#include "granet/sparse.hpp"
#include "granet/tape.hpp"
#include "granet/tensor.hpp"

using namespace granet;

TEST_CASE("tensor construction and access") {
  Tensor t = Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}});
  REQUIRE(t.rows() == 2);
  REQUIRE(t.cols() == 2);
  REQUIRE(t.at(1, 0) == 3.0);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), std::invalid_argument);
}

TEST_CASE("mlp_apply zero weights give zero output") {
  ParameterStore store;
  Rng rng(1);
  mlp_init(store, "z", {3, 4, 2}, rng);
  store.get("z/W0").values.assign(store.get("z/W0").values.size(), 0.0);
  store.get("z/W1").values.assign(store.get("z/W1").values.size(), 0.0);
  Tape tape;
  ParamBinder binder(tape, store);
  Var x = tape.constant(Tensor::matrix({{1.0, -2.0, 3.0}}));
  Var y = mlp_apply(tape, binder, store, "z", x, {3, 4, 2});
  for (double v : tape.val(y).values) CHECK(v == 0.0);
}

TEST_CASE("mlp_apply identity hidden layer passes nonnegative input through") {
  ParameterStore store;
  store.add("id/W0", Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
  store.add("id/b0", Tensor::zeros({1, 2}));
  store.add("id/W1", Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
  store.add("id/b1", Tensor::zeros({1, 2}));
  Tape tape;
  ParamBinder binder(tape, store);
  Var x = tape.constant(Tensor::matrix({{0.5, 2.0}, {0.0, 7.0}}));
  Var y = mlp_apply(tape, binder, store, "id", x, {2, 2, 2});
  CHECK(tape.val(y).values == tape.val(x).values);
}

TEST_CASE("mlp_apply 1->1 hand evaluation") {
  ParameterStore store;
  store.add("h/W0", Tensor::matrix({{2.0}}));
  store.add("h/b0", Tensor::matrix({{1.0}}));
  Tape tape;
  ParamBinder binder(tape, store);
  Var y = mlp_apply(tape, binder, store, "h", tape.constant(Tensor::matrix({{3.0}})), {1, 1});
  CHECK(tape.val(y).at(0, 0) == Catch::Approx(7.0));
}

TEST_CASE("mlp_apply names the parameter on shape mismatch") {
  ParameterStore store;
  store.add("bad/W0", Tensor::matrix({{1.0}}));
  store.add("bad/b0", Tensor::zeros({1, 1}));
  Tape tape;
  ParamBinder binder(tape, store);
  try {
    mlp_apply(tape, binder, store, "bad", tape.constant(Tensor::matrix({{1.0, 2.0}})), {2, 1});
    FAIL("expected shape error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("bad/W0") != std::string::npos);
  }
}

TEST_CASE("softmax values") {
  Tape tape;
  SECTION("uniform") {
    Var y = tape.softmax(tape.constant(Tensor::row({0.0, 0.0, 0.0})), 1);
    for (double v : tape.val(y).values) CHECK(v == Catch::Approx(1.0 / 3.0));
  }
  SECTION("no overflow at large logits") {
    Var y = tape.softmax(tape.constant(Tensor::row({1000.0, 0.0})), 1);
    CHECK(tape.val(y).at(0, 0) == Catch::Approx(1.0));
    CHECK(std::isfinite(tape.val(y).at(0, 1)));
  }
  SECTION("closed form") {
    Var y = tape.softmax(tape.constant(Tensor::row({std::log(1.0), std::log(3.0)})), 1);
    CHECK(tape.val(y).at(0, 0) == Catch::Approx(0.25));
    CHECK(tape.val(y).at(0, 1) == Catch::Approx(0.75));
  }
  SECTION("column axis sums to one") {
    Var y = tape.softmax(tape.constant(Tensor::matrix({{1.0, 4.0}, {2.0, -1.0}, {0.5, 0.0}})), 0);
    const Tensor& t = tape.val(y);
    for (std::size_t j = 0; j < t.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < t.rows(); ++i) s += t.at(i, j);
      CHECK(s == Catch::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax rows sum to one on random inputs") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = Tensor::zeros({3, 5});
    for (double& v : x.values) v = rng.uniform(-50.0, 50.0);
    Tape tape;
    const Tensor& y = tape.val(tape.softmax(tape.constant(x), 1));
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) s += y.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("cross entropy values") {
  Tape tape;
  SECTION("uniform two classes") {
    Var l = tape.cross_entropy(tape.constant(Tensor::row({0.0, 0.0})), {0});
    CHECK(tape.val(l).at(0, 0) == Catch::Approx(std::log(2.0)));
  }
  SECTION("saturated correct class") {
    Var l = tape.cross_entropy(tape.constant(Tensor::row({30.0, 0.0})), {0});
    CHECK(tape.val(l).at(0, 0) < 1e-9);
  }
  SECTION("closed form") {
    Var l = tape.cross_entropy(tape.constant(Tensor::row({std::log(1.0), std::log(3.0)})), {0});
    CHECK(tape.val(l).at(0, 0) == Catch::Approx(-std::log(0.25)));
  }
  SECTION("out-of-range label names the row") {
    try {
      tape.cross_entropy(tape.constant(Tensor::row({0.0, 0.0})), {2});
      FAIL("expected label error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("0") != std::string::npos);
    }
  }
}

TEST_CASE("smooth l1 values") {
  Tape tape;
  SECTION("zero at equality") {
    Var l = tape.smooth_l1(tape.constant(Tensor::row({1.0, -2.0})), Tensor::row({1.0, -2.0}), 1.0);
    CHECK(tape.val(l).at(0, 0) == 0.0);
  }
  SECTION("linear branch") {
    Var l = tape.smooth_l1(tape.constant(Tensor::row({2.0})), Tensor::row({0.0}), 1.0);
    CHECK(tape.val(l).at(0, 0) == Catch::Approx(1.5));
  }
  SECTION("quadratic branch") {
    Var l = tape.smooth_l1(tape.constant(Tensor::row({0.5})), Tensor::row({0.0}), 1.0);
    CHECK(tape.val(l).at(0, 0) == Catch::Approx(0.125));
  }
}

TEST_CASE("adam first step and convergence") {
  SECTION("zero gradient leaves parameters unchanged") {
    ParameterStore store;
    store.add("w", Tensor::scalar(1.0));
    GradientMap grads;
    grads["w"] = {0.0};
    AdamOptimizer opt(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    opt.step(store, grads);
    CHECK(store.get("w").at(0, 0) == 1.0);
  }
  SECTION("first step magnitude is about lr") {
    ParameterStore store;
    store.add("w", Tensor::scalar(1.0));
    GradientMap grads;
    grads["w"] = {1.0};
    AdamOptimizer opt(AdamConfig{0.1, 0.9, 0.999, 1e-8});
    opt.step(store, grads);
    CHECK(store.get("w").at(0, 0) == Catch::Approx(0.9).margin(1e-6));
  }
  SECTION("minimizes w^2 within 500 steps") {
    ParameterStore store;
    store.add("w", Tensor::scalar(1.0));
    AdamOptimizer opt(AdamConfig{0.05, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 500; ++i) {
      GradientMap grads;
      grads["w"] = {2.0 * store.get("w").at(0, 0)};
      opt.step(store, grads);
      if (std::abs(store.get("w").at(0, 0)) < 1e-3) break;
    }
    CHECK(std::abs(store.get("w").at(0, 0)) < 1e-3);
  }
  SECTION("missing gradient names the parameter") {
    ParameterStore store;
    store.add("lonely", Tensor::scalar(1.0));
    AdamOptimizer opt(AdamConfig{});
    GradientMap grads;
    try {
      opt.step(store, grads);
      FAIL("expected missing-gradient error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("lonely") != std::string::npos);
    }
  }
}

namespace {

/// Wraps a tape scalar closure for finite-difference comparison.
template <typename Build>
GradCheckReport check_op(Build build, Tensor x, double h = 1e-5) {
  auto f = [&](const Tensor& in, Tensor* grad_out) {
    Tape tape;
    Var v = tape.leaf(in, true);
    Var loss = build(tape, v);
    if (grad_out != nullptr) {
      tape.backward(loss);
      grad_out->values = tape.grad(v);
    }
    return tape.val(loss).at(0, 0);
  };
  return grad_check(f, x, h);
}

}  // namespace

TEST_CASE("grad check: linear map is near-exact") {
  Tensor x = Tensor::row({1.0, -2.0, 0.5});
  auto rep = check_op(
      [](Tape& t, Var v) {
        return t.sum_to_scalar(t.scale(v, 3.0));
      },
      x);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("grad check: softmax cross entropy composite") {
  Tensor x = Tensor::matrix({{0.3, -1.2, 2.0}, {0.0, 0.5, -0.5}});
  auto rep = check_op(
      [](Tape& t, Var v) { return t.cross_entropy(v, {2, 1}); }, x);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("grad check: max reduction at strict maximizer") {
  Tensor x = Tensor::matrix({{0.1, 5.0, -2.0}});
  auto rep = check_op(
      [](Tape& t, Var v) { return t.sum_to_scalar(t.max_over_rows(v)); }, x);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("grad check: every layer used by the network") {
  Rng rng(915);
  auto random_tensor = [&](std::size_t r, std::size_t c) {
    Tensor t = Tensor::zeros({r, c});
    for (double& v : t.values) v = rng.uniform(-1.5, 1.5);
    return t;
  };
  // 100 random inputs across layer kinds, fixed seed, 1e-4 relative tolerance.
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x = random_tensor(4, 3);
    Tensor w = random_tensor(3, 5);
    Tensor b = random_tensor(1, 5);
    auto affine_in = check_op(
        [&](Tape& t, Var v) {
          return t.sum_to_scalar(t.affine(v, t.constant(w), t.constant(b)));
        },
        x);
    CHECK(affine_in.max_rel_err < 1e-4);
    auto relu = check_op(
        [](Tape& t, Var v) { return t.sum_to_scalar(t.relu(v)); }, random_tensor(4, 5));
    CHECK(relu.max_rel_err < 1e-4);
    auto sig = check_op(
        [](Tape& t, Var v) { return t.sum_to_scalar(t.sigmoid(v)); }, random_tensor(3, 3));
    CHECK(sig.max_rel_err < 1e-4);
    auto soft0 = check_op(
        [](Tape& t, Var v) {
          return t.sum_to_scalar(t.mul_elem(t.softmax(v, 0), t.constant(Tensor::matrix(
                                                                 {{1.0, 2.0}, {3.0, -1.0}}))));
        },
        random_tensor(2, 2));
    CHECK(soft0.max_rel_err < 1e-4);
    auto smooth = check_op(
        [](Tape& t, Var v) { return t.smooth_l1(v, Tensor::row({0.4, -0.2, 0.9}), 1.0); },
        random_tensor(1, 3));
    CHECK(smooth.max_rel_err < 1e-4);
    auto maxcols = check_op(
        [](Tape& t, Var v) { return t.sum_to_scalar(t.max_over_cols(v)); }, random_tensor(3, 4));
    CHECK(maxcols.max_rel_err < 1e-4);
    auto meancols = check_op(
        [](Tape& t, Var v) { return t.sum_to_scalar(t.mean_over_cols(v)); }, random_tensor(3, 4));
    CHECK(meancols.max_rel_err < 1e-4);
    auto scale_rows_op = check_op(
        [](Tape& t, Var v) {
          Var s = t.constant(Tensor::matrix({{0.5}, {2.0}, {-1.0}}));
          return t.sum_to_scalar(t.scale_rows(v, s));
        },
        random_tensor(3, 4));
    CHECK(scale_rows_op.max_rel_err < 1e-4);
    auto gather = check_op(
        [](Tape& t, Var v) { return t.sum_to_scalar(t.gather_rows(v, {2, 0, 2})); },
        random_tensor(3, 4));
    CHECK(gather.max_rel_err < 1e-4);
    auto concat = check_op(
        [&](Tape& t, Var v) {
          return t.sum_to_scalar(t.concat_cols({v, t.relu(v)}));
        },
        random_tensor(3, 4));
    CHECK(concat.max_rel_err < 1e-4);
  }
}

TEST_CASE("grad check: sparse matmul against dense oracle") {
  SparseMatrix a;
  a.n_rows = 3;
  a.n_cols = 3;
  a.row_ptr = {0, 2, 3, 4};
  a.col = {0, 2, 1, 0};
  a.val = {0.5, 1.5, -2.0, 1.0};
  Tensor x = Tensor::matrix({{1.0, 2.0}, {-1.0, 0.5}, {3.0, -2.0}});
  auto rep = check_op(
      [&](Tape& t, Var v) { return t.sum_to_scalar(t.spmm(a, v)); }, x);
  CHECK(rep.max_rel_err < 1e-7);
  Tape tape;
  const Tensor& y = tape.val(tape.spmm(a, tape.constant(x)));
  CHECK(y.at(0, 0) == Catch::Approx(0.5 * 1.0 + 1.5 * 3.0));
  CHECK(y.at(1, 1) == Catch::Approx(-2.0 * 0.5));
  CHECK(y.at(2, 0) == Catch::Approx(1.0));
}

TEST_CASE("grad check: segment max routes to contributing edges") {
  Tensor msgs = Tensor::matrix({{1.0, 0.0}, {3.0, -1.0}, {2.0, 5.0}});
  std::vector<std::size_t> seg = {0, 0, 1};
  auto rep = check_op(
      [&](Tape& t, Var v) {
        Var defaults = t.constant(Tensor::zeros({2, 2}));
        return t.sum_to_scalar(t.segment_max(v, seg, 2, defaults));
      },
      msgs);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("tape determinism across runs") {
  auto run = [] {
    ParameterStore store;
    Rng rng(42);
    mlp_init(store, "m", {4, 8, 3}, rng);
    Tape tape;
    ParamBinder binder(tape, store);
    Tensor x = Tensor::zeros({5, 4});
    Rng xr(43);
    for (double& v : x.values) v = xr.uniform(-1.0, 1.0);
    Var y = mlp_apply(tape, binder, store, "m", tape.constant(x), {4, 8, 3});
    Var loss = tape.cross_entropy(y, {0, 2, 1, 1, 0});
    tape.backward(loss);
    GradientMap grads;
    binder.harvest(grads);
    return std::pair{tape.val(loss).at(0, 0), grads};
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("two identical training runs stay bit-identical") {
  auto train = [] {
    ParameterStore store;
    Rng rng(5);
    mlp_init(store, "t", {2, 6, 2}, rng);
    AdamOptimizer opt(AdamConfig{1e-3, 0.9, 0.999, 1e-8});
    for (int step = 0; step < 25; ++step) {
      Tape tape;
      ParamBinder binder(tape, store);
      Tensor x = Tensor::matrix({{0.2, -0.4}, {1.0, 0.3}});
      Var y = mlp_apply(tape, binder, store, "t", tape.constant(x), {2, 6, 2});
      tape.backward(tape.cross_entropy(y, {0, 1}));
      GradientMap grads;
      binder.harvest(grads);
      opt.step(store, grads);
    }
    std::vector<double> flat;
    for (const auto& [name, t] : store) flat.insert(flat.end(), t.values.begin(), t.values.end());
    return flat;
  };
  CHECK(train() == train());
}

TEST_CASE("checkpoint round trip and error paths") {
  ParameterStore store;
  Rng rng(11);
  mlp_init(store, "net", {3, 5, 2}, rng);
  const std::string path = "ckpt_test.bin";
  ckpt::save(store, path);
  ParameterStore loaded = ckpt::load(path);
  REQUIRE(loaded.count() == store.count());
  for (const auto& [name, t] : store) {
    REQUIRE(loaded.has(name));
    CHECK(loaded.get(name).values == t.values);
    CHECK(loaded.get(name).shape == t.shape);
  }
  SECTION("bad magic") {
    FILE* f = std::fopen("ckpt_bad.bin", "wb");
    std::fputs("NOPE", f);
    std::fclose(f);
    CHECK_THROWS_WITH(ckpt::load("ckpt_bad.bin"), Catch::Matchers::ContainsSubstring("magic"));
  }
  SECTION("truncated file") {
    FILE* in = std::fopen(path.c_str(), "rb");
    char buf[64];
    const std::size_t got = std::fread(buf, 1, sizeof(buf), in);
    std::fclose(in);
    REQUIRE(got == sizeof(buf));
    FILE* out = std::fopen("ckpt_trunc.bin", "wb");
    std::fwrite(buf, 1, got, out);
    std::fclose(out);
    CHECK_THROWS_AS(ckpt::load("ckpt_trunc.bin"), std::runtime_error);
  }
  std::remove(path.c_str());
  std::remove("ckpt_bad.bin");
  std::remove("ckpt_trunc.bin");
}

TEST_CASE("sparse multiply matches dense multiply") {
  Rng rng(99);
  SparseMatrix a;
  a.n_rows = 6;
  a.n_cols = 6;
  a.row_ptr.assign(7, 0);
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (rng.uniform01() < 0.4) rows[i].push_back({j, rng.uniform(-1.0, 1.0)});
  for (std::size_t i = 0; i < 6; ++i) {
    a.row_ptr[i + 1] = a.row_ptr[i] + rows[i].size();
    for (auto& [j, v] : rows[i]) {
      a.col.push_back(j);
      a.val.push_back(v);
    }
  }
  SparseMatrix sq = multiply(a, a);
  auto dense = [](const SparseMatrix& m) {
    std::vector<std::vector<double>> d(m.n_rows, std::vector<double>(m.n_cols, 0.0));
    for (std::size_t i = 0; i < m.n_rows; ++i)
      for (std::size_t e = m.row_ptr[i]; e < m.row_ptr[i + 1]; ++e) d[i][m.col[e]] += m.val[e];
    return d;
  };
  auto da = dense(a);
  auto dsq = dense(sq);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      double want = 0.0;
      for (std::size_t k = 0; k < 6; ++k) want += da[i][k] * da[k][j];
      CHECK(dsq[i][j] == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("parameter store iterates in sorted name order") {
  ParameterStore store;
  store.add("zeta/W0", Tensor::scalar(1.0));
  store.add("alpha/W0", Tensor::scalar(2.0));
  store.add("mid/b", Tensor::scalar(3.0));
  std::vector<std::string> names;
  for (const auto& [name, t] : store) names.push_back(name);
  CHECK(names == std::vector<std::string>{"alpha/W0", "mid/b", "zeta/W0"});
  CHECK_THROWS_AS(store.add("mid/b", Tensor::scalar(4.0)), std::invalid_argument);
}
