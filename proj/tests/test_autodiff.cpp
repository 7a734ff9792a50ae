#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cadmr/graph.hpp>

#include <functional>

using namespace cadmr;
using Tape64 = Tape<double>;

namespace {

// Central finite differences over every coordinate of every parameter.
double max_rel_err_vs_fd(std::vector<Parameter<double>*> params,
                         const std::function<double()>& forward,
                         const std::function<void()>& backward_once, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  backward_once();
  double worst = 0.0;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        const double saved = p->value(i, j);
        p->value(i, j) = saved + h;
        const double fp = forward();
        p->value(i, j) = saved - h;
        const double fm = forward();
        p->value(i, j) = saved;
        const double numeric = (fp - fm) / (2 * h);
        const double analytic = p->grad(i, j);
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1.0});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("backward: loss = sum(p) gives an all-ones gradient") {
  RngStream rng(1);
  Parameter<double> p(normal_matrix<double>(3, 4, rng), "p");
  Tape64 tape;
  tape.backward(tape.sum_all(tape.leaf(p)));
  CHECK(p.grad == Matd::Ones(3, 4));
}

TEST_CASE("backward: loss = sum(p * p) gives gradient 2p") {
  RngStream rng(2);
  Parameter<double> p(normal_matrix<double>(2, 5, rng), "p");
  Tape64 tape;
  auto* leaf = tape.leaf(p);
  tape.backward(tape.sum_all(tape.hadamard(leaf, leaf)));
  CHECK((p.grad - 2.0 * p.value).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backward accumulates across calls until parameters are zeroed") {
  RngStream rng(3);
  Parameter<double> p(normal_matrix<double>(2, 2, rng), "p");
  {
    Tape64 tape;
    auto* loss = tape.sum_all(tape.leaf(p));
    tape.backward(loss);
    tape.backward(loss);
  }
  CHECK(p.grad == 2.0 * Matd::Ones(2, 2));
}

TEST_CASE("backward rejects a non-scalar loss") {
  RngStream rng(4);
  Parameter<double> p(normal_matrix<double>(2, 2, rng), "p");
  Tape64 tape;
  CHECK_THROWS_AS(tape.backward(tape.leaf(p)), ShapeError);
}

TEST_CASE("matmul gradient: d sum(A B) / dA equals ones * B^T and matches FD") {
  RngStream rng(5);
  Parameter<double> a(normal_matrix<double>(3, 4, rng), "a");
  Parameter<double> b(normal_matrix<double>(4, 2, rng), "b");

  auto forward = [&] {
    Tape64 tape;
    return tape.sum_all(tape.matmul(tape.leaf(a), tape.leaf(b)))->value(0, 0);
  };
  auto backward_once = [&] {
    Tape64 tape;
    tape.backward(tape.sum_all(tape.matmul(tape.leaf(a), tape.leaf(b))));
  };
  CHECK(max_rel_err_vs_fd({&a, &b}, forward, backward_once) < 1e-6);

  // analytic closed form for dA
  Matd expected = Matd::Ones(3, 2) * b.value.transpose();
  CHECK((a.grad - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sigmoid gradient at zero is 0.25 and matches FD to 1e-8") {
  Parameter<double> p(Matd::Zero(1, 1), "p");
  auto forward = [&] {
    Tape64 tape;
    return tape.sum_all(tape.sigmoid(tape.leaf(p)))->value(0, 0);
  };
  p.zero_grad();
  {
    Tape64 tape;
    tape.backward(tape.sum_all(tape.sigmoid(tape.leaf(p))));
  }
  CHECK(p.grad(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  const double h = 1e-6;
  p.value(0, 0) = h;
  const double fp = forward();
  p.value(0, 0) = -h;
  const double fm = forward();
  p.value(0, 0) = 0.0;
  CHECK(std::abs((fp - fm) / (2 * h) - 0.25) < 1e-8);
}

TEST_CASE("composite MLP loss gradients match finite differences") {
  RngStream rng(6);
  Parameter<double> w0(glorot_uniform<double>(5, 8, rng), "w0");
  Parameter<double> b0(normal_matrix<double>(1, 8, rng), "b0");
  Parameter<double> w1(glorot_uniform<double>(8, 3, rng), "w1");
  Parameter<double> b1(normal_matrix<double>(1, 3, rng), "b1");
  const Matd x = normal_matrix<double>(6, 5, rng);
  const Matd target = normal_matrix<double>(6, 3, rng);

  auto build = [&](Tape64& tape) {
    auto* h = tape.relu(tape.add_row_broadcast(tape.matmul(tape.constant(x), tape.leaf(w0)),
                                               tape.leaf(b0)));
    auto* out = tape.sigmoid(
        tape.add_row_broadcast(tape.matmul(h, tape.leaf(w1)), tape.leaf(b1)));
    auto* diff = tape.sub(tape.constant(target), out);
    return tape.scale(tape.sum_all(tape.square(diff)), 1.0 / (6.0 * 3.0));
  };
  auto forward = [&] {
    Tape64 tape;
    return build(tape)->value(0, 0);
  };
  auto backward_once = [&] {
    Tape64 tape;
    tape.backward(build(tape));
  };
  CHECK(max_rel_err_vs_fd({&w0, &b0, &w1, &b1}, forward, backward_once) < 1e-5);
}

TEST_CASE("layer_norm, softmax, broadcast and slice gradients match FD") {
  RngStream rng(7);
  Parameter<double> w(normal_matrix<double>(4, 6, rng), "w");
  Parameter<double> divisor((normal_matrix<double>(1, 3, rng).array().abs() + 0.5).matrix(), "div");

  auto build = [&](Tape64& tape) {
    auto* normed = tape.layer_norm(tape.leaf(w), 1e-5);
    auto* soft = tape.softmax_rows(tape.slice_cols(normed, 1, 3));
    auto* scaled = tape.div_row_broadcast(soft, tape.leaf(divisor));
    auto* both = tape.concat_cols({scaled, tape.square(soft)});
    auto* summed = tape.add(tape.row_sums(both), tape.transpose(tape.col_means(tape.transpose(both))));
    return tape.sum_all(tape.sqrt_elem(tape.clamp_min(tape.square(summed), 1e-3)));
  };
  auto forward = [&] {
    Tape64 tape;
    return build(tape)->value(0, 0);
  };
  auto backward_once = [&] {
    Tape64 tape;
    tape.backward(build(tape));
  };
  CHECK(max_rel_err_vs_fd({&w, &divisor}, forward, backward_once) < 1e-5);
}

TEST_CASE("determinism: identical seeds and call order give bitwise-equal results") {
  auto run = [] {
    RngStream rng(42);
    Parameter<double> w(glorot_uniform<double>(4, 4, rng), "w");
    RngStream dropout_rng = derive_stream(42, "dropout");
    Tape64 tape;
    auto* x = tape.constant(normal_matrix<double>(5, 4, rng));
    auto* y = tape.dropout(tape.sigmoid(tape.matmul(x, tape.leaf(w))), 0.3, dropout_rng, true);
    auto* loss = tape.sum_all(y);
    tape.backward(loss);
    return std::pair{loss->value(0, 0), w.grad};
  };
  auto [loss_a, grad_a] = run();
  auto [loss_b, grad_b] = run();
  CHECK(loss_a == loss_b);
  CHECK(grad_a == grad_b);
}
