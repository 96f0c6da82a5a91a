#include <gtest/gtest.h>

#include <cmath>

#include "lexnmt/tape.hpp"
#include "testutil.hpp"

using lexnmt::Parameter;
using lexnmt::Tape;
using lexnmt::Tensor;
using lexnmt::Var;
using testutil::max_grad_rel_error;
using testutil::random_tensor;

namespace {

using D = double;

TEST(Tensor, ShapeChecks) {
  Tensor<D> t({2, 3});
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.rows(), 2);
  EXPECT_EQ(t.cols(), 3);
  EXPECT_THROW(Tensor<D>({2, 0}), std::invalid_argument);
  EXPECT_THROW(Tensor<D>({2, 2}, {1.0, 2.0}), std::invalid_argument);
}

TEST(Matmul, IdentityCase) {
  Tape<D> tape;
  auto i2 = tape.constant(Tensor<D>({2, 2}, {1, 0, 0, 1}));
  auto a = tape.constant(Tensor<D>({2, 2}, {1, 2, 3, 4}));
  auto c = matmul(i2, a);
  const Tensor<D>& v = tape.value(c);
  EXPECT_EQ(v.vec(), (std::vector<D>{1, 2, 3, 4}));
}

TEST(Matmul, HandArithmetic) {
  Tape<D> tape;
  auto a = tape.constant(Tensor<D>({1, 2}, {1, 2}));
  auto b = tape.constant(Tensor<D>({2, 1}, {3, 4}));
  auto c = matmul(a, b);
  EXPECT_DOUBLE_EQ(tape.value(c)[0], 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape<D> tape;
  auto a = tape.constant(Tensor<D>({2, 3}));
  auto b = tape.constant(Tensor<D>({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  lexnmt::Rng rng(7);
  Parameter<D> a("a", random_tensor<D>({3, 4}, rng));
  Parameter<D> b("b", random_tensor<D>({4, 2}, rng));
  const double err = max_grad_rel_error<D>(
      {&a, &b}, [&](Tape<D>& t) { return sum(matmul(t.input(a), t.input(b))); });
  EXPECT_LT(err, 1e-6);
}

TEST(Elementwise, TrivialValues) {
  Tape<D> tape;
  auto x = tape.constant(Tensor<D>({1}, {0.0}));
  EXPECT_DOUBLE_EQ(tape.value(tanh_(x))[0], 0.0);
  EXPECT_DOUBLE_EQ(tape.value(sigmoid_(x))[0], 0.5);
  EXPECT_DOUBLE_EQ(tape.value(exp_(x))[0], 1.0);
}

TEST(Elementwise, BiasBroadcastOverRows) {
  Tape<D> tape;
  auto a = tape.constant(Tensor<D>({2, 2}, {1, 2, 3, 4}));
  auto b = tape.constant(Tensor<D>({2}, {10, 20}));
  auto c = add(a, b);
  EXPECT_EQ(tape.value(c).vec(), (std::vector<D>{11, 22, 13, 24}));
}

// Every differentiable op against the central finite-difference oracle,
// 20 random seeds each.
TEST(Gradients, AllOpsFiniteDifferenceSweep) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    lexnmt::Rng rng(seed);
    Parameter<D> a("a", random_tensor<D>({3, 4}, rng));
    Parameter<D> b("b", random_tensor<D>({3, 4}, rng));
    Parameter<D> bias("bias", random_tensor<D>({4}, rng));
    Parameter<D> w("w", random_tensor<D>({3}, rng));
    Parameter<D> pos("pos", random_tensor<D>({3, 4}, rng, 0.5, 2.0));
    Parameter<D> m2("m2", random_tensor<D>({4, 3}, rng));
    // Probes are drawn once; the build lambdas must describe the same function
    // on every invocation or the finite-difference oracle is meaningless.
    const Tensor<D> probe = random_tensor<D>({3, 4}, rng);
    const Tensor<D> probe_rows = random_tensor<D>({3}, rng);
    const Tensor<D> probe33 = random_tensor<D>({3, 3}, rng);
    const Tensor<D> probe44 = random_tensor<D>({4, 4}, rng);
    const Tensor<D> probe43 = random_tensor<D>({4, 3}, rng);
    const Tensor<D> probe38 = random_tensor<D>({3, 8}, rng);
    const Tensor<D> probe32 = random_tensor<D>({3, 2}, rng);

    auto weighted = [&](Tape<D>& t, Var<D> v) {
      return sum(mul(v, t.constant(probe)));
    };

    struct Case {
      const char* name;
      std::vector<Parameter<D>*> params;
      std::function<Var<D>(Tape<D>&)> build;
      double tol;
    };
    std::vector<Case> cases;
    cases.push_back({"add", {&a, &b}, [&](Tape<D>& t) {
                       return weighted(t, add(t.input(a), t.input(b)));
                     }, 1e-6});
    cases.push_back({"add_bias", {&a, &bias}, [&](Tape<D>& t) {
                       return weighted(t, add(t.input(a), t.input(bias)));
                     }, 1e-6});
    cases.push_back({"sub", {&a, &b}, [&](Tape<D>& t) {
                       return weighted(t, sub(t.input(a), t.input(b)));
                     }, 1e-6});
    cases.push_back({"mul", {&a, &b}, [&](Tape<D>& t) {
                       return weighted(t, mul(t.input(a), t.input(b)));
                     }, 1e-6});
    cases.push_back({"mul_colvec", {&a, &w}, [&](Tape<D>& t) {
                       return weighted(t, mul_colvec(t.input(a), t.input(w)));
                     }, 1e-6});
    cases.push_back({"tanh", {&a}, [&](Tape<D>& t) {
                       return weighted(t, tanh_(t.input(a)));
                     }, 1e-6});
    cases.push_back({"sigmoid", {&a}, [&](Tape<D>& t) {
                       return weighted(t, sigmoid_(t.input(a)));
                     }, 1e-6});
    cases.push_back({"exp", {&a}, [&](Tape<D>& t) {
                       return weighted(t, exp_(t.input(a)));
                     }, 1e-6});
    cases.push_back({"log", {&pos}, [&](Tape<D>& t) {
                       return weighted(t, log_(t.input(pos)));
                     }, 1e-6});
    cases.push_back({"scale", {&a}, [&](Tape<D>& t) {
                       return weighted(t, scale(t.input(a), 2.5));
                     }, 1e-6});
    cases.push_back({"matmul", {&a, &m2}, [&](Tape<D>& t) {
                       return sum(mul(matmul(t.input(a), t.input(m2)),
                                      t.constant(probe33)));
                     }, 1e-6});
    cases.push_back({"matmul_nt", {&a, &b}, [&](Tape<D>& t) {
                       return sum(mul(matmul_nt(t.input(a), t.input(b)),
                                      t.constant(probe33)));
                     }, 1e-6});
    cases.push_back({"softmax_rows", {&a}, [&](Tape<D>& t) {
                       return weighted(t, softmax_rows(t.input(a)));
                     }, 1e-4});
    cases.push_back({"log_softmax_rows", {&a}, [&](Tape<D>& t) {
                       return weighted(t, log_softmax_rows(t.input(a)));
                     }, 1e-4});
    cases.push_back({"normalize_to_radius", {&a}, [&](Tape<D>& t) {
                       return weighted(t, normalize_to_radius(t.input(a), 5.0));
                     }, 1e-4});
    cases.push_back({"lookup", {&a}, [&](Tape<D>& t) {
                       return sum(mul(lookup(t.input(a), {0, 2, 2, 1}),
                                      t.constant(probe44)));
                     }, 1e-6});
    cases.push_back({"pick_rows", {&a}, [&](Tape<D>& t) {
                       return sum(mul(pick_rows(t.input(a), {1, 0, 3}),
                                      t.constant(probe_rows)));
                     }, 1e-6});
    cases.push_back({"concat_cols", {&a, &b}, [&](Tape<D>& t) {
                       return sum(mul(concat_cols(t.input(a), t.input(b)),
                                      t.constant(probe38)));
                     }, 1e-6});
    cases.push_back({"slice_cols", {&a}, [&](Tape<D>& t) {
                       return sum(mul(slice_cols(t.input(a), 1, 3),
                                      t.constant(probe32)));
                     }, 1e-6});
    cases.push_back({"col", {&a}, [&](Tape<D>& t) {
                       return sum(mul(col(t.input(a), 2), t.constant(probe_rows)));
                     }, 1e-6});
    cases.push_back({"stack_cols", {&w, &a}, [&](Tape<D>& t) {
                       std::vector<Var<D>> cs = {t.input(w), rowsum(t.input(a))};
                       return sum(mul(stack_cols(cs), t.constant(probe32)));
                     }, 1e-6});
    cases.push_back({"rowsum", {&a}, [&](Tape<D>& t) {
                       return sum(mul(rowsum(t.input(a)), t.constant(probe_rows)));
                     }, 1e-6});

    for (auto& c : cases) {
      SCOPED_TRACE(std::string(c.name) + " seed " + std::to_string(seed));
      const double err = max_grad_rel_error<D>(c.params, c.build);
      EXPECT_LT(err, c.tol);
    }
  }
}

TEST(Softmax, UniformRow) {
  Tape<D> tape;
  auto x = tape.constant(Tensor<D>({1, 4}, {3, 3, 3, 3}));
  const Tensor<D>& y = tape.value(softmax_rows(x));
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(y[j], 0.25, 1e-15);
}

TEST(Softmax, ClosedForm) {
  Tape<D> tape;
  auto x = tape.constant(Tensor<D>({1, 2}, {0.0, std::log(3.0)}));
  const Tensor<D>& y = tape.value(softmax_rows(x));
  EXPECT_NEAR(y[0], 0.25, 1e-12);
  EXPECT_NEAR(y[1], 0.75, 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  lexnmt::Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<D> base = random_tensor<D>({5, 7}, rng, -10, 10);
    Tensor<D> shifted = base;
    for (int i = 0; i < 5; ++i) {
      const D c = static_cast<D>(rng.uniform(-4, 4));
      for (int j = 0; j < 7; ++j) shifted.at(i, j) += c;
    }
    Tape<D> tape;
    const Tensor<D>& y0 = tape.value(softmax_rows(tape.constant(base)));
    const Tensor<D>& y1 = tape.value(softmax_rows(tape.constant(shifted)));
    for (int i = 0; i < 5; ++i) {
      D rowsum = 0;
      for (int j = 0; j < 7; ++j) {
        rowsum += y0.at(i, j);
        EXPECT_GE(y0.at(i, j), 0.0);
        EXPECT_NEAR(y0.at(i, j), y1.at(i, j), 1e-12);
      }
      EXPECT_NEAR(rowsum, 1.0, 1e-12);
    }
  }
}

TEST(Normalize, AlreadyAtRadius) {
  Tape<D> tape;
  auto v = tape.constant(Tensor<D>({2}, {3, 4}));
  const Tensor<D>& y = tape.value(normalize_to_radius(v, 5.0));
  EXPECT_NEAR(y[0], 3.0, 1e-12);
  EXPECT_NEAR(y[1], 4.0, 1e-12);
}

TEST(Normalize, PureRescale) {
  Tape<D> tape;
  auto v = tape.constant(Tensor<D>({2}, {0.6, 0.8}));
  const Tensor<D>& y = tape.value(normalize_to_radius(v, 5.0));
  EXPECT_NEAR(y[0], 3.0, 1e-12);
  EXPECT_NEAR(y[1], 4.0, 1e-12);
}

TEST(Normalize, RowNormsEqualRadius) {
  lexnmt::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    // Row scales spanning 1e-3 .. 1e2.
    Tensor<D> x = random_tensor<D>({6, 8}, rng);
    for (int i = 0; i < 6; ++i) {
      const D s = std::pow(10.0, rng.uniform(-3, 2));
      D norm = 0;
      for (int j = 0; j < 8; ++j) norm += x.at(i, j) * x.at(i, j);
      norm = std::sqrt(norm);
      for (int j = 0; j < 8; ++j) x.at(i, j) *= s / norm;
    }
    Tape<D> tape;
    const Tensor<D>& y = tape.value(normalize_to_radius(tape.constant(x), 5.0));
    for (int i = 0; i < 6; ++i) {
      D n = 0;
      for (int j = 0; j < 8; ++j) n += y.at(i, j) * y.at(i, j);
      EXPECT_NEAR(std::sqrt(n), 5.0, 1e-9);
    }
  }
}

TEST(Normalize, ScaleInvariant) {
  lexnmt::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<D> x = random_tensor<D>({8}, rng);
    Tensor<D> cx = x;
    const D c = static_cast<D>(std::pow(10.0, rng.uniform(-2, 2)));
    for (int j = 0; j < 8; ++j) cx[j] *= c;
    Tape<D> tape;
    const Tensor<D>& y0 = tape.value(normalize_to_radius(tape.constant(x), 3.0));
    const Tensor<D>& y1 = tape.value(normalize_to_radius(tape.constant(cx), 3.0));
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(y0[j], y1[j], 1e-9);
  }
}

TEST(Normalize, ZeroRowGuarded) {
  Parameter<D> p("p", Tensor<D>({3}));
  const double err = max_grad_rel_error<D>({&p}, [&](Tape<D>& t) {
    return sum(normalize_to_radius(t.input(p), 5.0));
  });
  // Output and gradient stay finite; the projection maps zero to zero.
  for (int j = 0; j < 3; ++j) EXPECT_TRUE(std::isfinite(p.grad[j]));
  EXPECT_LT(err, 1e-4);
  Tape<D> tape;
  const Tensor<D>& y = tape.value(normalize_to_radius(tape.constant(Tensor<D>({3})), 5.0));
  for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(y[j], 0.0);
}

TEST(Normalize, GradientOnEightDims) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    lexnmt::Rng rng(seed);
    Parameter<D> v("v", random_tensor<D>({8}, rng));
    const Tensor<D> probe = random_tensor<D>({8}, rng);
    const double err = max_grad_rel_error<D>({&v}, [&](Tape<D>& t) {
      return sum(mul(normalize_to_radius(t.input(v), 5.0), t.constant(probe)));
    });
    EXPECT_LT(err, 1e-5);
  }
}

TEST(Lookup, GathersRows) {
  Tape<D> tape;
  auto table = tape.constant(Tensor<D>({3, 2}, {1, 2, 3, 4, 5, 6}));
  const Tensor<D>& y = tape.value(lookup(table, {0}));
  EXPECT_EQ(y.vec(), (std::vector<D>{1, 2}));
  EXPECT_THROW(lookup(table, {3}), std::out_of_range);
  EXPECT_THROW(lookup(table, {-1}), std::out_of_range);
}

TEST(Lookup, RepeatedIdAccumulatesTwice) {
  Parameter<D> table("t", Tensor<D>({3, 2}, {1, 2, 3, 4, 5, 6}));
  Tape<D> tape;
  auto loss = sum(lookup(tape.input(table), {1, 1}));
  lexnmt::zero_grads<D>({&table});
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(table.grad.at(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(table.grad.at(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(table.grad.at(0, 0), 0.0);
}

TEST(Lookup, ScatterAddMatchesFiniteDifferences) {
  lexnmt::Rng rng(9);
  Parameter<D> table("t", random_tensor<D>({5, 3}, rng));
  const Tensor<D> probe = random_tensor<D>({4, 3}, rng);
  const double err = max_grad_rel_error<D>({&table}, [&](Tape<D>& t) {
    return sum(mul(lookup(t.input(table), {4, 0, 4, 2}), t.constant(probe)));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Dropout, IdentityCases) {
  lexnmt::Rng rng(1);
  Tape<D> tape;
  auto x = tape.constant(Tensor<D>({2, 2}, {1, 2, 3, 4}));
  auto y0 = dropout(x, 0.0, true, rng);
  auto y1 = dropout(x, 0.7, false, rng);
  EXPECT_EQ(y0.id, x.id);
  EXPECT_EQ(y1.id, x.id);
  EXPECT_THROW(dropout(x, 1.0, true, rng), std::invalid_argument);
}

TEST(Dropout, SurvivorFraction) {
  lexnmt::Rng rng(12);
  const double p = 0.3;
  Tape<D> tape;
  auto x = tape.constant(Tensor<D>::full({100000}, 1.0));
  const Tensor<D>& y = tape.value(dropout(x, p, true, rng));
  std::int64_t survivors = 0;
  for (std::int64_t i = 0; i < y.size(); ++i)
    if (y[i] != 0.0) {
      EXPECT_NEAR(y[i], 1.0 / (1.0 - p), 1e-12);
      ++survivors;
    }
  EXPECT_NEAR(static_cast<double>(survivors) / 1e5, 1.0 - p, 0.01);
}

TEST(Dropout, BackwardUsesSameMask) {
  lexnmt::Rng rng(13);
  Parameter<D> x("x", Tensor<D>::full({50}, 2.0));
  Tape<D> tape;
  auto y = dropout(tape.input(x), 0.4, true, rng);
  const Tensor<D> yv = tape.value(y);
  lexnmt::zero_grads<D>({&x});
  tape.backward(sum(y));
  for (int i = 0; i < 50; ++i) {
    EXPECT_DOUBLE_EQ(x.grad[i], yv[i] / 2.0);  // grad is mask scale
  }
}

TEST(Backward, SumGivesOnes) {
  Parameter<D> x("x", Tensor<D>({2, 3}, {1, 2, 3, 4, 5, 6}));
  Tape<D> tape;
  lexnmt::zero_grads<D>({&x});
  tape.backward(sum(tape.input(x)));
  for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(x.grad[i], 1.0);
}

TEST(Backward, SumOfSquaresGivesTwoX) {
  Parameter<D> x("x", Tensor<D>({4}, {1, -2, 3, 0.5}));
  Tape<D> tape;
  auto v = tape.input(x);
  lexnmt::zero_grads<D>({&x});
  tape.backward(sum(mul(v, v)));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad[i], 2.0 * x.value[i]);
}

TEST(Backward, NonScalarLossRejected) {
  Tape<D> tape;
  auto x = tape.constant(Tensor<D>({2}, {1, 2}));
  EXPECT_THROW(tape.backward(x), std::invalid_argument);
}

TEST(Backward, ReuseAccumulatesSumOfSingleUses) {
  lexnmt::Rng rng(21);
  Parameter<D> x("x", random_tensor<D>({3, 3}, rng));
  Parameter<D> m("m", random_tensor<D>({3, 3}, rng));

  lexnmt::zero_grads<D>({&x});
  {
    Tape<D> tape;
    auto xv = tape.input(x);
    tape.backward(add(sum(matmul(xv, tape.input(m))), sum(tanh_(xv))));
  }
  Tensor<D> both = x.grad;

  lexnmt::zero_grads<D>({&x});
  {
    Tape<D> tape;
    tape.backward(sum(matmul(tape.input(x), tape.input(m))));
  }
  Tensor<D> first = x.grad;

  lexnmt::zero_grads<D>({&x});
  {
    Tape<D> tape;
    tape.backward(sum(tanh_(tape.input(x))));
  }
  for (int i = 0; i < 9; ++i)
    EXPECT_NEAR(both[i], first[i] + x.grad[i], 1e-12);
}

TEST(Backward, UnreachableParameterStaysZero) {
  lexnmt::Rng rng(22);
  Parameter<D> x("x", random_tensor<D>({2, 2}, rng));
  Parameter<D> unused("u", random_tensor<D>({2, 2}, rng));
  Tape<D> tape;
  auto xv = tape.input(x);
  tape.input(unused);  // on the tape but not part of the loss
  lexnmt::zero_grads<D>({&x, &unused});
  tape.backward(sum(xv));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(unused.grad[i], 0.0);
}

TEST(DebugChecks, LogDomainViolation) {
  lexnmt::debug_checks() = true;
  Tape<D> tape;
  auto x = tape.constant(Tensor<D>({1}, {-1.0}));
  EXPECT_THROW(log_(x), std::domain_error);
  lexnmt::debug_checks() = false;
}

}  // namespace
