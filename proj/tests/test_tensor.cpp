#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "oie/autodiff.hpp"
#include "oie/rng.hpp"
#include "oie/tensor.hpp"
#include "oracles.hpp"

using namespace oie;
using oie::testing::finite_difference_check;
using oie::testing::random_tensor;

namespace {

Parameter make_param(const std::string& name, Tensor t,
                     ParamGroup g = ParamGroup::body) {
  return Parameter(name, g, std::move(t));
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.shape_str() == "[2x3]");
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0, 3}), std::invalid_argument);
}

TEST_CASE("rng is deterministic and serializable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  a.gaussian();
  Rng c = Rng::deserialize(a.serialize());
  for (int i = 0; i < 16; ++i) CHECK(a.gaussian() == c.gaussian());
}

TEST_CASE("matmul: identity and hand arithmetic") {
  Tape t;
  Rng rng(1);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Var va = t.input(a);
  Var prod = t.matmul(va, t.input(eye));
  CHECK(tmax_abs_diff(t.val(prod), a) == 0.0);

  Var m = t.matmul(t.input(Tensor({2, 2}, {1, 2, 3, 4})),
                   t.input(Tensor({2, 1}, {1, 1})));
  CHECK(t.val(m).at(0, 0) == 3.0);
  CHECK(t.val(m).at(1, 0) == 7.0);

  CHECK_THROWS_AS(t.matmul(t.input(Tensor({2, 3})), t.input(Tensor({2, 3}))),
                  std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences at 1e-6") {
  Rng rng(7);
  Parameter a = make_param("a", random_tensor({3, 4}, rng));
  Parameter b = make_param("b", random_tensor({4, 2}, rng));
  auto forward = [&]() {
    Tape t;
    return t.val(t.sum_all(t.matmul(t.leaf(a), t.leaf(b)))).at(0);
  };
  {
    Tape t;
    t.backward(t.sum_all(t.matmul(t.leaf(a), t.leaf(b))));
  }
  auto res = finite_difference_check(forward, {&a, &b}, 1e-5, 1e-9);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax values") {
  Tape t;
  Var u = t.softmax(t.input(Tensor({1, 4}, {2.5, 2.5, 2.5, 2.5})), 1);
  for (int j = 0; j < 4; ++j) CHECK(t.val(u).at(0, j) == doctest::Approx(0.25));

  Var v = t.softmax(t.input(Tensor({2}, {0.0, std::log(3.0)})), 0);
  CHECK(t.val(v).at(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t.val(v).at(1) == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS(t.softmax(t.input(Tensor({2, 2})), 2), std::invalid_argument);
}

TEST_CASE("softmax rows sum to one within 1e-12 and stay in [0,1]") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 1 + static_cast<int>(rng.uniform_int(7));
    const int n = 1 + static_cast<int>(rng.uniform_int(7));
    Tape t;
    Var s = t.softmax(t.input(random_tensor({m, n}, rng, 5.0)), 1);
    for (int i = 0; i < m; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p = t.val(s).at(i, j);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        sum += p;
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("softmax gradient matches finite differences at 1e-6") {
  Rng rng(13);
  Parameter x = make_param("x", random_tensor({3, 5}, rng));
  const Tensor w = random_tensor({3, 5}, rng);
  auto forward = [&]() {
    Tape t;
    return t.val(t.sum_all(t.mul(t.softmax(t.leaf(x), 1), t.input(w)))).at(0);
  };
  {
    Tape t;
    t.backward(t.sum_all(t.mul(t.softmax(t.leaf(x), 1), t.input(w))));
  }
  auto res = finite_difference_check(forward, {&x}, 1e-5, 1e-9);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("cross entropy closed forms") {
  Tape t;
  // Perfect classification with a huge margin drives the loss to zero.
  Tensor sharp({2, 3});
  sharp.at(0, 1) = 50.0;
  sharp.at(1, 2) = 50.0;
  Var l0 = t.cross_entropy(t.input(sharp), {1, 2});
  CHECK(t.val(l0).at(0) == doctest::Approx(0.0).epsilon(1e-12));

  Var l1 = t.cross_entropy(t.input(Tensor({2, 4})), {0, 3});
  CHECK(t.val(l1).at(0) == doctest::Approx(std::log(4.0)));

  CHECK_THROWS_AS(t.cross_entropy(t.input(Tensor({2, 3})), {0, 1}, {1, 1}),
                  std::invalid_argument);
  CHECK_THROWS_AS(t.cross_entropy(t.input(Tensor({2, 3})), {0, 5}),
                  std::invalid_argument);
}

TEST_CASE("cross entropy equals a direct formula evaluation") {
  Rng rng(17);
  Tensor logits = random_tensor({5, 3}, rng, 2.0);
  std::vector<int> targets = {2, 0, 1, 1, 2};

  // Reference computed term by term from the definition.
  double expected = 0.0;
  for (int i = 0; i < 5; ++i) {
    double denom = 0.0;
    for (int j = 0; j < 3; ++j) denom += std::exp(logits.at(i, j));
    expected += -std::log(std::exp(logits.at(i, targets[static_cast<std::size_t>(i)])) / denom);
  }
  expected /= 5.0;

  Tape t;
  Var l = t.cross_entropy(t.input(logits), targets);
  CHECK(t.val(l).at(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cross entropy respects the padding mask") {
  Rng rng(19);
  Tensor logits = random_tensor({4, 3}, rng);
  Tape t;
  Var full = t.cross_entropy(t.input(logits), {0, 1, 2, 0}, {0, 0, 1, 1});
  Tensor head = tslice_rows(logits, 0, 2);
  Var ref = t.cross_entropy(t.input(head), {0, 1});
  CHECK(t.val(full).at(0) == doctest::Approx(t.val(ref).at(0)).epsilon(1e-14));
}

TEST_CASE("backward: linear case, freezing, scalar requirement") {
  Rng rng(23);
  Parameter p = make_param("p", random_tensor({3, 2}, rng));
  {
    Tape t;
    t.backward(t.sum_all(t.leaf(p)));
    for (int i = 0; i < p.grad.numel(); ++i) CHECK(p.grad.at(i) == 1.0);
  }

  Parameter frozen = make_param("frozen", random_tensor({2, 2}, rng));
  frozen.trainable = false;
  {
    Tape t;
    t.backward(t.sum_all(t.add(t.leaf(frozen), t.leaf(frozen))));
    for (int i = 0; i < frozen.grad.numel(); ++i) CHECK(frozen.grad.at(i) == 0.0);
  }

  Tape t;
  Var nonscalar = t.input(Tensor({2, 2}));
  CHECK_THROWS_AS(t.backward(nonscalar), std::invalid_argument);
}

TEST_CASE("two backward passes from the same tape state are bitwise identical") {
  Rng rng(29);
  Parameter a = make_param("a", random_tensor({4, 4}, rng));
  Parameter g = make_param("g", random_tensor({1, 4}, rng));
  Parameter b = make_param("b", random_tensor({1, 4}, rng));
  Tape t;
  Var y = t.layer_norm(t.relu(t.matmul(t.leaf(a), t.leaf(a))), t.leaf(g), t.leaf(b));
  Var loss = t.sum_all(t.softmax(y, 1));

  a.zero_grad(); g.zero_grad(); b.zero_grad();
  t.backward(loss);
  std::vector<double> first = a.grad.data;
  a.zero_grad(); g.zero_grad(); b.zero_grad();
  t.backward(loss);
  REQUIRE(first.size() == a.grad.data.size());
  CHECK(std::memcmp(first.data(), a.grad.data.data(),
                    first.size() * sizeof(double)) == 0);
}

TEST_CASE("every primitive matches finite differences on random shapes") {
  Rng rng(31);
  const double tol = 1e-4;

  auto check_net = [&](const char* what, auto build, std::vector<Parameter*> ps) {
    auto forward = [&]() {
      Tape t;
      return t.val(build(t)).at(0);
    };
    for (Parameter* p : ps) p->zero_grad();
    {
      Tape t;
      t.backward(build(t));
    }
    auto res = finite_difference_check(forward, ps);
    INFO(what << ": " << res.worst);
    CHECK(res.max_rel_err < tol);
  };

  for (int rep = 0; rep < 3; ++rep) {
    const int m = 2 + static_cast<int>(rng.uniform_int(6));
    const int n = 2 + static_cast<int>(rng.uniform_int(6));
    const int k = 2 + static_cast<int>(rng.uniform_int(6));

    Parameter a = make_param("a", random_tensor({m, n}, rng));
    Parameter b = make_param("b", random_tensor({m, n}, rng));
    Parameter w = make_param("w", random_tensor({n, k}, rng));
    Parameter row = make_param("row", random_tensor({1, n}, rng));
    Parameter gamma = make_param("gamma", random_tensor({1, n}, rng));
    Parameter beta = make_param("beta", random_tensor({1, n}, rng));
    Parameter table = make_param("table", random_tensor({5, n}, rng));
    const Tensor wa = random_tensor({m, n}, rng);
    const Tensor wk = random_tensor({m, k}, rng);
    const Tensor we = random_tensor({4, n}, rng);

    check_net("add+mul", [&](Tape& t) {
      return t.sum_all(t.mul(t.add(t.leaf(a), t.leaf(b)), t.input(wa)));
    }, {&a, &b});

    check_net("relu", [&](Tape& t) {
      return t.sum_all(t.mul(t.relu(t.leaf(a)), t.input(wa)));
    }, {&a});

    check_net("matmul+transpose", [&](Tape& t) {
      return t.sum_all(t.mul(t.transpose(t.matmul(t.leaf(a), t.leaf(w))),
                             t.input(ttranspose(wk))));
    }, {&a, &w});

    check_net("add_broadcast_row", [&](Tape& t) {
      return t.sum_all(t.mul(t.add_broadcast_row(t.leaf(a), t.leaf(row)),
                             t.input(wa)));
    }, {&a, &row});

    check_net("layer_norm", [&](Tape& t) {
      return t.sum_all(t.mul(t.layer_norm(t.leaf(a), t.leaf(gamma), t.leaf(beta)),
                             t.input(wa)));
    }, {&a, &gamma, &beta});

    check_net("embedding", [&](Tape& t) {
      return t.sum_all(t.mul(t.embedding(t.leaf(table), {0, 2, 4, 2}),
                             t.input(we)));
    }, {&table});

    check_net("concat+slice", [&](Tape& t) {
      Var c = t.concat_cols({t.leaf(a), t.leaf(b)});
      Var s = t.slice_cols(t.slice_rows(c, 0, m), 1, n + 1);
      return t.sum_all(t.mul(s, t.input(wa)));
    }, {&a, &b});

    check_net("mean_rows", [&](Tape& t) {
      return t.sum_all(t.mul(t.mean_rows(t.leaf(a)),
                             t.input(tslice_rows(wa, 0, 1))));
    }, {&a});

    check_net("softmax axis0", [&](Tape& t) {
      return t.sum_all(t.mul(t.softmax(t.leaf(a), 0), t.input(wa)));
    }, {&a});

    check_net("mul_scalar+gather", [&](Tape& t) {
      Var lrow = t.slice_rows(t.leaf(a), 0, 1);
      Var sel = t.softmax(t.gather_cols(lrow, {0, n - 1}), 1);
      Var s0 = t.slice_cols(sel, 0, 1);
      return t.sum_all(t.mul(t.mul_scalar(t.leaf(b), s0), t.input(wa)));
    }, {&a, &b});

    check_net("cross_entropy", [&](Tape& t) {
      std::vector<int> targets(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) targets[static_cast<std::size_t>(i)] = i % n;
      return t.cross_entropy(t.leaf(a), targets);
    }, {&a});
  }
}

TEST_CASE("composite network gradient within 1e-4 of finite differences") {
  Rng rng(37);
  Parameter emb = make_param("emb", random_tensor({6, 4}, rng, 0.5));
  Parameter w1 = make_param("w1", random_tensor({4, 4}, rng, 0.5));
  Parameter g = make_param("g", Tensor::full({1, 4}, 1.0));
  Parameter b = make_param("b", Tensor({1, 4}));
  Parameter wout = make_param("wout", random_tensor({4, 3}, rng, 0.5));

  auto build = [&](Tape& t) {
    Var x = t.embedding(t.leaf(emb), {1, 3, 5, 2});
    Var h = t.layer_norm(t.add(x, t.relu(t.matmul(x, t.leaf(w1)))), t.leaf(g), t.leaf(b));
    Var att = t.softmax(t.scale(t.matmul(h, t.transpose(h)), 0.5), 1);
    Var mixed = t.matmul(att, h);
    Var logits = t.matmul(mixed, t.leaf(wout));
    return t.cross_entropy(logits, {0, 1, 2, 1});
  };

  auto forward = [&]() {
    Tape t;
    return t.val(build(t)).at(0);
  };
  {
    Tape t;
    t.backward(build(t));
  }
  auto res = finite_difference_check(forward, {&emb, &w1, &g, &b, &wout});
  INFO(res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("non-finite values abort with the producing op named") {
  Tape t;
  Tensor bad({1, 2});
  bad.at(0) = std::numeric_limits<double>::quiet_NaN();
  std::string msg;
  try {
    t.input(bad);
  } catch (const std::runtime_error& e) {
    msg = e.what();
  }
  CHECK(msg.find("input") != std::string::npos);

  Var big = t.input(Tensor({1, 2}, {1e308, 1e308}));
  msg.clear();
  try {
    t.scale(big, 10.0);
  } catch (const std::runtime_error& e) {
    msg = e.what();
  }
  CHECK(msg.find("scale") != std::string::npos);
}
