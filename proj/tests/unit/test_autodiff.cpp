#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pseudopilot/autodiff.hpp"
#include "pseudopilot/errors.hpp"
#include "pseudopilot/rng.hpp"
#include "pseudopilot/tensor.hpp"

using namespace pseudopilot;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Central finite differences against the tape's analytic gradients for
// every entry of every parameter. The builder reconstructs the loss from
// scratch on each call so perturbed evaluations see the perturbed store.
double max_rel_err(ParamStore params,
                   const std::function<Value(Tape&, const ParamStore&)>& build,
                   double step = 1e-6) {
  GradMap analytic;
  {
    Tape tape;
    Value loss = build(tape, params);
    analytic = tape.gradients(loss, params);
  }
  auto eval = [&](const ParamStore& p) {
    Tape tape;
    return tape.scalar(build(tape, p));
  };
  double worst = 0.0;
  for (const std::string& name : params.names()) {
    Tensor& w = params.at(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w.values()[i];
      w.values()[i] = keep + step;
      const double up = eval(params);
      w.values()[i] = keep - step;
      const double down = eval(params);
      w.values()[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic.at(name).values()[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("gradients of matmul chain match finite differences") {
  Rng rng(201);
  ParamStore p;
  p.add("a", random_tensor(rng, 3, 4));
  p.add("b", random_tensor(rng, 4, 2));
  CHECK(max_rel_err(p, [](Tape& t, const ParamStore& s) {
          return sum_all(matmul(t.param(s, "a"), t.param(s, "b")));
        }) < 1e-6);
}

TEST_CASE("gradient of matmul has the closed form ones * b^T") {
  Rng rng(202);
  ParamStore p;
  p.add("a", random_tensor(rng, 2, 3));
  p.add("b", random_tensor(rng, 3, 5));
  Tape tape;
  Value loss = sum_all(matmul(tape.param(p, "a"), tape.param(p, "b")));
  GradMap g = tape.gradients(loss, p);
  // d sum(AB) / dA[i,k] = sum_j B[k,j]
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      double want = 0.0;
      for (std::size_t j = 0; j < 5; ++j) want += p.at("b").at(k, j);
      CHECK(g.at("a").at(i, k) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("gradients of matmul_nt, add, sub, mul, scale") {
  Rng rng(203);
  ParamStore p;
  p.add("a", random_tensor(rng, 3, 4));
  p.add("b", random_tensor(rng, 2, 4));
  p.add("c", random_tensor(rng, 3, 2));
  CHECK(max_rel_err(p, [](Tape& t, const ParamStore& s) {
          Value prod = matmul_nt(t.param(s, "a"), t.param(s, "b"));  // [3,2]
          Value mixed = mul(add(prod, t.param(s, "c")), sub(prod, scale(t.param(s, "c"), 0.7)));
          return mean_all(mixed);
        }) < 1e-6);
}

TEST_CASE("gradient of add_row_broadcast accumulates over rows") {
  Rng rng(204);
  ParamStore p;
  p.add("a", random_tensor(rng, 4, 3));
  p.add("r", random_tensor(rng, 1, 3));
  CHECK(max_rel_err(p, [](Tape& t, const ParamStore& s) {
          return sum_all(add_row_broadcast(t.param(s, "a"), t.param(s, "r")));
        }) < 1e-6);
  // closed form: d/dr[j] = number of rows
  Tape tape;
  Value loss = sum_all(add_row_broadcast(tape.param(p, "a"), tape.param(p, "r")));
  GradMap g = tape.gradients(loss, p);
  for (std::size_t j = 0; j < 3; ++j) CHECK(g.at("r").at(0, j) == doctest::Approx(4.0));
}

TEST_CASE("gradient of relu away from the kink") {
  ParamStore p;
  Tensor a(2, 3);
  a.values() = {1.5, -2.0, 0.5, -0.25, 3.0, -1.0};  // no zeros
  p.add("a", a);
  CHECK(max_rel_err(p, [](Tape& t, const ParamStore& s) {
          return sum_all(relu(t.param(s, "a")));
        }) < 1e-6);
}

TEST_CASE("gradient of row_l2_normalize on well-conditioned rows") {
  Rng rng(205);
  ParamStore p;
  Tensor a = random_tensor(rng, 3, 4);
  for (std::size_t r = 0; r < a.rows(); ++r) a.at(r, 0) += 2.0;  // keep norms ~2
  p.add("a", a);
  p.add("w", random_tensor(rng, 2, 4));
  CHECK(max_rel_err(p, [](Tape& t, const ParamStore& s) {
          return mean_all(matmul_nt(row_l2_normalize(t.param(s, "a")),
                                    row_l2_normalize(t.param(s, "w"))));
        }) < 1e-6);
}

TEST_CASE("gradient of log_softmax picked at label columns") {
  Rng rng(206);
  ParamStore p;
  p.add("z", random_tensor(rng, 4, 5, 2.0));
  const std::vector<int> labels{0, 3, 1, 4};
  CHECK(max_rel_err(p, [&](Tape& t, const ParamStore& s) {
          return scale(mean_all(pick_columns(log_softmax_rows(t.param(s, "z")), labels)), -1.0);
        }) < 1e-6);
}

TEST_CASE("gradient of softmax_rows and row_sum") {
  Rng rng(207);
  ParamStore p;
  p.add("z", random_tensor(rng, 3, 4));
  p.add("m", random_tensor(rng, 3, 4));
  CHECK(max_rel_err(p, [](Tape& t, const ParamStore& s) {
          return sum_all(row_sum(mul(softmax_rows(t.param(s, "z")), t.param(s, "m"))));
        }) < 1e-6);
}

TEST_CASE("gradient of clamp_unit in the interior and zero outside") {
  ParamStore p;
  Tensor a(1, 4);
  a.values() = {-0.8, 0.2, 0.6, -0.4};
  p.add("a", a);
  CHECK(max_rel_err(p, [](Tape& t, const ParamStore& s) {
          return sum_all(clamp_unit(t.param(s, "a")));
        }) < 1e-6);

  Tensor b(1, 2);
  b.values() = {1.5, -1.5};  // saturated: gradient must be exactly zero
  ParamStore q;
  q.add("b", b);
  Tape tape;
  Value loss = sum_all(clamp_unit(tape.param(q, "b")));
  GradMap g = tape.gradients(loss, q);
  CHECK(g.at("b").at(0, 0) == 0.0);
  CHECK(g.at("b").at(0, 1) == 0.0);
}

TEST_CASE("margin_cosine matches cos(theta + m) and its gradient") {
  ParamStore p;
  Tensor c(2, 3);
  c.values() = {-0.7, -0.2, 0.0, 0.3, 0.6, 0.85};  // strictly inside (-1,1)
  p.add("c", c);
  const double m = 0.5;

  Tape tape;
  Value out = margin_cosine(tape.param(p, "c"), m);
  const Tensor& val = tape.value(out);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double theta = std::acos(c.values()[i]);
    CHECK(val.values()[i] == doctest::Approx(std::cos(theta + m)).epsilon(1e-12));
  }

  CHECK(max_rel_err(p, [&](Tape& t, const ParamStore& s) {
          return sum_all(margin_cosine(t.param(s, "c"), m));
        }) < 1e-6);
}

TEST_CASE("gradient of replace_columns flows to both sources") {
  Rng rng(208);
  ParamStore p;
  p.add("z", random_tensor(rng, 3, 4));
  p.add("v", random_tensor(rng, 3, 1));
  const std::vector<int> idx{1, 0, 3};
  CHECK(max_rel_err(p, [&](Tape& t, const ParamStore& s) {
          Value patched = replace_columns(t.param(s, "z"), idx, t.param(s, "v"));
          return mean_all(pick_columns(log_softmax_rows(patched), idx));
        }) < 1e-6);
}

TEST_CASE("recorded forward values equal the plain eval helpers bitwise") {
  Rng rng(209);
  Tensor a = random_tensor(rng, 4, 5);
  Tensor b = random_tensor(rng, 3, 5);
  Tape tape;
  Value va = tape.input(a);
  Value vb = tape.input(b);
  CHECK(tape.value(matmul_nt(va, vb)) == matmul_nt(a, b));
  CHECK(tape.value(log_softmax_rows(va)) == log_softmax_rows_eval(a));
  CHECK(tape.value(softmax_rows(va)) == softmax_rows_eval(a));
  CHECK(tape.value(clamp_unit(va)) == clamp_unit_eval(a));
  Tensor shifted = a;
  for (auto& v : shifted.values()) v += 1.0;
  CHECK(tape.value(row_l2_normalize(tape.input(shifted))) == row_l2_normalize_eval(shifted));
}

TEST_CASE("binding a parameter twice reuses the node") {
  Rng rng(210);
  ParamStore p;
  p.add("w", random_tensor(rng, 2, 2));
  Tape tape;
  Value first = tape.param(p, "w");
  const std::size_t count = tape.node_count();
  Value second = tape.param(p, "w");
  CHECK(tape.node_count() == count);
  CHECK(first.index() == second.index());
}

TEST_CASE("unreached parameters get zero gradients") {
  Rng rng(211);
  ParamStore p;
  p.add("used", random_tensor(rng, 2, 2));
  p.add("unused", random_tensor(rng, 3, 3));
  Tape tape;
  Value loss = sum_all(tape.param(p, "used"));
  GradMap g = tape.gradients(loss, p);
  REQUIRE(g.count("unused") == 1);
  for (double v : g.at("unused").values()) CHECK(v == 0.0);
}

TEST_CASE("structural errors: shape mismatch, bad index, mixed tapes") {
  Tape t1, t2;
  Value a = t1.input(Tensor(2, 3));
  Value b = t1.input(Tensor(3, 3));
  CHECK_THROWS_AS(add(a, b), ConfigError);
  CHECK_THROWS_AS(pick_columns(a, std::vector<int>{0, 7}), ValidationError);
  Value c = t2.input(Tensor(2, 3));
  CHECK_THROWS_AS(add(a, c), ConfigError);
}

TEST_CASE("finite differences catch a deliberately wrong margin gradient") {
  // Analytic gradients of cos(theta + m) must NOT match finite differences
  // of cos(theta - m): the harness would flag a sign slip in the margin.
  ParamStore p;
  Tensor c(1, 3);
  c.values() = {-0.4, 0.1, 0.55};
  p.add("c", c);
  const double m = 0.5;

  GradMap analytic;
  {
    Tape tape;
    Value loss = sum_all(margin_cosine(tape.param(p, "c"), m));
    analytic = tape.gradients(loss, p);
  }
  const double step = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    auto wrong = [&](double x) { return std::cos(std::acos(x) - m); };  // flipped sign
    const double keep = p.at("c").values()[i];
    const double fd = (wrong(keep + step) - wrong(keep - step)) / (2.0 * step);
    const double an = analytic.at("c").values()[i];
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), 1e-4));
  }
  CHECK(worst > 1e-2);
}
