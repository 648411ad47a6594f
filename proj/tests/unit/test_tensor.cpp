#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gate/checkpoint.hpp"
#include "gate/error.hpp"
#include "gate/gradcheck.hpp"
#include "gate/params.hpp"
#include "gate/rng.hpp"
#include "gate/tensor.hpp"

using namespace gate;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.uniform(-1, 1);
  return m;
}

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("matmul small cases") {
  const auto m = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(matmul(Matrix::identity(2), m) == m);
  const auto r = matmul(m, Matrix::from_rows({{1}, {1}}));
  CHECK(r == Matrix::from_rows({{3}, {7}}));
}

TEST_CASE("matmul agrees with triple loop") {
  Rng rng(3);
  const auto a = random_matrix(5, 4, rng), b = random_matrix(4, 3, rng);
  CHECK(max_diff(matmul(a, b).data(), naive_matmul(a, b).data()) <= 1e-10);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(32), k = 1 + rng.below(32), p = 1 + rng.below(32);
    const auto x = random_matrix(n, k, rng), y = random_matrix(k, p, rng);
    CHECK(max_diff(matmul(x, y).data(), naive_matmul(x, y).data()) <= 1e-10);
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("gemv helpers match matmul") {
  Rng rng(5);
  const auto w = random_matrix(4, 3, rng);
  Vector x = {0.3, -0.2, 0.9}, y(4), z = {1, 2, 3, 4}, zt(3);
  gemv(w, x, y);
  const auto ref = matmul(w, Matrix::column(x));
  CHECK(max_diff(y, ref.data()) <= 1e-12);
  gemv_t(w, z, zt);
  const auto reft = matmul(transpose(w), Matrix::column(z));
  CHECK(max_diff(zt, reft.data()) <= 1e-12);
}

TEST_CASE("softmax basics") {
  const auto u = softmax(Vector{0, 0, 0});
  for (double p : u) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(softmax(Vector{-123.4})[0] == 1.0);
  const auto big = softmax(Vector{1000, 1000.5});
  const auto ref = softmax(Vector{-0.5, 0.0});
  CHECK(all_finite(big));
  CHECK(max_diff(big, ref) <= 1e-12);
  CHECK_THROWS_AS(softmax(Vector{}), std::invalid_argument);
}

TEST_CASE("softmax positive, normalized, shift invariant") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    Vector v(1 + rng.below(20));
    for (double& x : v) x = rng.uniform(-30, 30);
    const auto p = softmax(v);
    double s = 0;
    for (double x : p) {
      CHECK(x > 0);
      s += x;
    }
    CHECK(std::abs(s - 1) <= 1e-9);
    Vector shifted = v;
    const double c = rng.uniform(-500, 500);
    for (double& x : shifted) x += c;
    CHECK(max_diff(softmax(shifted), p) <= 1e-9);
  }
}

TEST_CASE("softmax_rows") {
  const auto z = softmax_rows(Matrix(2, 3));
  for (double x : z.data()) CHECK(x == doctest::Approx(1.0 / 3));
  const auto one = softmax_rows(Matrix::from_rows({{4}, {-2}, {0}}));
  for (double x : one.data()) CHECK(x == 1.0);
  Rng rng(2);
  const auto m = random_matrix(4, 6, rng);
  const auto s = softmax_rows(m);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(max_diff(s.row(r), softmax(m.row(r))) == 0.0);
  }
  CHECK_THROWS(softmax_rows(Matrix(3, 0)));
}

TEST_CASE("require_finite reports") {
  CHECK_NOTHROW(require_finite(Vector{1, 2}, "x"));
  CHECK_THROWS_AS(require_finite(Vector{1, NAN}, "x"), NumericError);
  CHECK_THROWS_AS(require_finite(Vector{INFINITY}, "x"), NumericError);
}

// ---- Adam ----

TEST_CASE("adam one step closed form") {
  ParameterSet p;
  p.add("x", Matrix(1, 1, 2.0));
  Gradients g{{"x", Matrix(1, 1, 0.7)}};
  AdamConfig cfg;
  adam_step(p, g, cfg);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  const double expect = 2.0 - cfg.learning_rate * 0.7 / (0.7 + cfg.epsilon);
  CHECK(p.value("x")(0, 0) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(std::abs(2.0 - p.value("x")(0, 0) - cfg.learning_rate) < 1e-9);
  CHECK(p.step() == 1);
}

TEST_CASE("adam zero gradient leaves values unchanged") {
  Rng rng(1);
  ParameterSet p;
  p.add("a", random_matrix(3, 2, rng));
  p.add("b", random_matrix(4, 1, rng));
  const auto before = p;
  for (int i = 0; i < 5; ++i) adam_step(p, p.zero_gradients(), AdamConfig{});
  CHECK(p.value("a") == before.value("a"));
  CHECK(p.value("b") == before.value("b"));
  CHECK(p.step() == 5);
}

TEST_CASE("adam descends x^2") {
  ParameterSet p;
  p.add("x", Matrix(1, 1, 1.0));
  double prev = 1.0;
  for (int i = 0; i < 10; ++i) {
    Gradients g{{"x", Matrix(1, 1, 2 * p.value("x")(0, 0))}};
    adam_step(p, g, AdamConfig{});
    const double now = std::abs(p.value("x")(0, 0));
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("adam rejects bad gradients without touching params") {
  ParameterSet p;
  p.add("a", Matrix(2, 2, 1.0));
  p.add("b", Matrix(1, 1, 1.0));
  const auto before = p;
  CHECK_THROWS_AS(adam_step(p, Gradients{{"a", Matrix(2, 2)}}, AdamConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(adam_step(p, Gradients{{"a", Matrix(2, 1)}, {"b", Matrix(1, 1)}}, AdamConfig{}), ShapeError);
  try {
    adam_step(p, Gradients{{"a", Matrix(2, 2)}, {"b", Matrix(1, 1, NAN)}}, AdamConfig{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(p == before);
}

TEST_CASE("adam config validation") {
  AdamConfig c;
  CHECK_NOTHROW(c.validate());
  c.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

// ---- gradient check ----

TEST_CASE("gradient check on a quadratic") {
  Rng rng(4);
  ParameterSet p;
  p.add("w", random_matrix(3, 3, rng));
  p.add("v", random_matrix(5, 1, rng));
  auto loss = [](const ParameterSet& q) {
    double s = 0;
    for (const auto& [n, slot] : q.slots())
      for (double x : slot.value.data()) s += 0.5 * x * x;
    return s;
  };
  Gradients g;
  for (const auto& [n, slot] : p.slots()) g[n] = slot.value;
  GradCheckOptions opts;
  opts.tol = 1e-6;
  const auto before = p;
  const auto rep = finite_diff_check(loss, p, g, opts);
  CHECK(rep.passed());
  CHECK(rep.at("w").coords_checked == 9);
  CHECK(p == before);

  SUBCASE("corrupted slot fails") {
    Gradients bad = g;
    for (double& x : bad["v"].data()) x *= 2;
    const auto r2 = finite_diff_check(loss, p, bad, opts);
    CHECK_FALSE(r2.passed());
    CHECK_FALSE(r2.at("v").passed);
    CHECK(r2.at("w").passed);
  }
  SUBCASE("non-finite loss is an error") {
    CHECK_THROWS_AS(finite_diff_check([](const ParameterSet&) { return NAN; }, p, g), NumericError);
  }
}

// ---- checkpoint ----

TEST_CASE("checkpoint round trip is bit exact") {
  namespace fs = std::filesystem;
  Rng rng(9);
  Checkpoint ck;
  ck.params.add("W", random_matrix(3, 4, rng));
  ck.params.add("b", random_matrix(3, 1, rng));
  Gradients g{{"W", random_matrix(3, 4, rng)}, {"b", random_matrix(3, 1, rng)}};
  adam_step(ck.params, g, AdamConfig{});
  ck.params.value("W")(0, 0) = 0.1 + 0.2;  // not representable exactly in short decimal
  ck.metadata = {{"epoch", "3"}, {"note", "tab\there"}};
  const auto path = fs::temp_directory_path() / "gate_ckpt_roundtrip.ckpt";
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  CHECK(back.params == ck.params);
  CHECK(back.metadata == ck.metadata);
  CHECK(back.params.slot("W").second_moment == ck.params.slot("W").second_moment);
  CHECK(back.params.step() == 1);

  SUBCASE("bad magic and truncation are data errors") {
    {
      std::ofstream out(path, std::ios::binary);
      out << "NOTACKPT";
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    save_checkpoint(path, ck);
    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 5);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
  fs::remove(path);
}
