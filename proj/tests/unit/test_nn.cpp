#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "prognet/nn/checkpoint.hpp"
#include "prognet/nn/gradcheck.hpp"
#include "prognet/nn/layers.hpp"
#include "prognet/nn/ops.hpp"
#include "prognet/nn/tape.hpp"

using namespace prognet::nn;

namespace {

Tensor matrix(Shape shape, std::vector<double> values) { return Tensor(std::move(shape), std::move(values)); }

void check_values(const Tensor& t, const std::vector<double>& expected, double tol = 0.0) {
  REQUIRE(t.numel() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(t.at(i) - expected[i]) <= tol * std::max(1.0, std::abs(expected[i])));
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = u(rng);
  return t;
}

Parameter random_param(const std::string& name, Shape shape, std::mt19937_64& rng) {
  return Parameter(name, random_tensor(std::move(shape), rng));
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("linear forward") {
  CHECK(linear(matrix({1, 2}, {1, 2}), Tensor::zeros({2, 2}), Tensor::zeros({2})).data()[0] == 0.0);
  auto eye = linear(matrix({2, 2}, {1, 0, 0, 1}), matrix({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2}));
  check_values(eye, {1, 0, 0, 1});
  auto y = linear(matrix({1, 2}, {1, 2}), matrix({2, 2}, {3, 4, 5, 6}), matrix({2}, {1, -1}));
  CHECK(y.shape() == Shape{1, 2});
  check_values(y, {12, 16});
}

TEST_CASE("linear shape mismatch names both shapes") {
  try {
    (void)linear(Tensor::zeros({1, 3}), Tensor::zeros({2, 2}), Tensor());
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1, 3]") != std::string::npos);
    CHECK(msg.find("[2, 2]") != std::string::npos);
  }
}

TEST_CASE("conv2d forward") {
  auto y = conv2d(Tensor::full({1, 1, 8, 8}, 1.0), Tensor::full({1, 1, 8, 8}, 1.0), Tensor::zeros({1}), 4);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 64.0);

  std::mt19937_64 rng(3);
  auto z = conv2d(random_tensor({2, 3, 11, 9}, rng), Tensor::zeros({4, 3, 3, 3}), Tensor::zeros({4}), 2);
  CHECK(z.shape() == Shape{2, 4, 5, 4});
  for (double v : z.data()) CHECK(v == 0.0);

  auto big = conv2d(Tensor::zeros({1, 3, 64, 64}), Tensor::zeros({16, 3, 8, 8}), Tensor::zeros({16}), 4);
  CHECK(big.shape() == Shape{1, 16, 15, 15});

  CHECK_THROWS_AS((void)conv2d(Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 5, 5}), Tensor(), 1), DimensionError);
}

TEST_CASE("conv2d matches direct summation") {
  std::mt19937_64 rng(11);
  auto x = random_tensor({2, 2, 7, 6}, rng);
  auto k = random_tensor({3, 2, 3, 2}, rng);
  auto b = random_tensor({3}, rng);
  const std::size_t s = 2;
  auto y = conv2d(x, k, b, s);
  const std::size_t oh = (7 - 3) / s + 1, ow = (6 - 2) / s + 1;
  REQUIRE(y.shape() == Shape{2, 3, oh, ow});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b.at(o);
          for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t u = 0; u < 3; ++u)
              for (std::size_t v = 0; v < 2; ++v)
                acc += x.at(((n * 2 + c) * 7 + i * s + u) * 6 + j * s + v) * k.at(((o * 2 + c) * 3 + u) * 2 + v);
          CHECK(y.at(((n * 3 + o) * oh + i) * ow + j) == doctest::Approx(acc).epsilon(1e-14));
        }
}

TEST_CASE("conv output size follows floor((n-k)/s)+1") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dn(1, 40), ds(1, 6);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = dn(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const std::size_t s = ds(rng);
    CHECK(conv_output_size(n, k, s) == (n - k) / s + 1);
  }
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const std::size_t s = ds(rng);
    auto y = conv2d(Tensor::zeros({1, 1, n, n}), Tensor::zeros({1, 1, k, k}), Tensor(), s);
    CHECK(y.size(2) == (n - k) / s + 1);
  }
}

TEST_CASE("relu") {
  check_values(relu(matrix({3}, {-1, 0, 2})), {0, 0, 2});
  check_values(relu(matrix({3}, {-1, -2, -0.5})), {0, 0, 0});
  Parameter x("x", matrix({2}, {-1, 2}));
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(relu(x.value)));
  }
  check_values(Tensor({2}, {x.value.grad()[0], x.value.grad()[1]}), {0, 1});

  Parameter z("z", matrix({1}, {0.0}));
  Tape t2;
  {
    TapeScope scope(t2);
    t2.backward(sum(relu(z.value)));
  }
  CHECK(z.value.grad()[0] == 0.0);
}

TEST_CASE("softmax") {
  check_values(softmax(matrix({1, 3}, {0, 0, 0})), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
  auto s = softmax(matrix({1, 3}, {1000, 0, 0}));
  CHECK(s.all_finite());
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(1) < 1e-300);
  auto r = softmax(matrix({1, 3}, {1, 2, 3}));
  long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(r.at(i) - static_cast<double>(std::exp(i + 1.0L) / z)) < 1e-12);
}

TEST_CASE("softmax rows sum to one for large inputs") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_tensor({4, 9}, rng, -1e4, 1e4);
    auto p = softmax_groups(x, 3);
    REQUIRE(p.all_finite());
    for (std::size_t row = 0; row < 4; ++row)
      for (std::size_t g = 0; g < 3; ++g) {
        double total = 0.0;
        for (std::size_t a = 0; a < 3; ++a) total += p.at(row * 9 + g * 3 + a);
        CHECK(std::abs(total - 1.0) < 1e-6);
      }
    auto lp = log_softmax_groups(x, 3);
    CHECK(lp.all_finite());
  }
}

TEST_CASE("backward: outer product, independence and accumulation") {
  std::mt19937_64 rng(2);
  Parameter w = random_param("w", {3, 4}, rng);
  Parameter unused = random_param("unused", {2}, rng);
  Tensor x = random_tensor({1, 4}, rng);
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = add(sum(linear(x, w.value, Tensor())), scale(sum(unused.value), 0.0));
  tape.backward(loss);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 4; ++i) CHECK(w.value.grad()[o * 4 + i] == doctest::Approx(x.at(i)).epsilon(1e-15));
  for (double g : unused.value.grad()) CHECK(g == 0.0);

  std::vector<double> first(w.value.grad().begin(), w.value.grad().end());
  tape.backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(w.value.grad()[i] == 2.0 * first[i]);
  w.value.zero_grad();
  for (double g : w.value.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward on a non-scalar is a usage error") {
  Parameter w("w", Tensor::full({2}, 1.0));
  Tape tape;
  TapeScope scope(tape);
  CHECK_THROWS_AS(tape.backward(scale(w.value, 2.0)), UsageError);
}

TEST_CASE("finite_diff_check on a quadratic") {
  std::mt19937_64 rng(4);
  Parameter w = random_param("w", {5, 3}, rng);
  Parameter* ps[] = {&w};
  auto report = finite_diff_check([&] { return sum(square(w.value)); }, ps);
  CHECK(report.coordinates_checked == 15);
  CHECK(report.max_relative_error < 1e-8);
  for (std::size_t i = 0; i < w.numel(); ++i) CHECK(w.value.grad()[i] == doctest::Approx(2.0 * w.value.at(i)));
}

TEST_CASE("finite_diff_check reports zero gradient on frozen parameters") {
  std::mt19937_64 rng(4);
  Parameter w = random_param("w", {2, 3}, rng);
  Parameter v = random_param("v", {3}, rng);
  v.freeze();
  Parameter* ps[] = {&w, &v};
  auto report = finite_diff_check(
      [&] { return sum(square(linear(reshape(v.value, {1, 3}), w.value, Tensor()))); }, ps);
  CHECK(report.frozen_coordinates == 3);
  CHECK(report.frozen_max_abs_grad == 0.0);
  CHECK(report.max_relative_error < 1e-7);
}

TEST_CASE("finite_diff_check detects a non-deterministic loss") {
  Parameter w("w", Tensor::full({1}, 1.0));
  Parameter* ps[] = {&w};
  int calls = 0;
  CHECK_THROWS_AS(finite_diff_check([&] { return scale(sum(w.value), 1.0 + ++calls); }, ps), UnreliableOracle);
}

TEST_CASE("finite_diff_check skips coordinates that straddle a relu kink") {
  Parameter w("w", Tensor({3}, std::vector<double>{0.5, 1e-4, -0.8}));
  Parameter* ps[] = {&w};
  auto loss = [&] { return sum(relu(w.value)); };
  GradCheckOptions plain{1e-3, 3, 0, {}};
  CHECK(finite_diff_check(loss, ps, plain).max_relative_error > 0.1);

  GradCheckOptions aware = plain;
  aware.activation_pattern = [&] {
    std::vector<bool> on;
    for (double v : w.value.data()) on.push_back(v > 0.0);
    return on;
  };
  auto report = finite_diff_check(loss, ps, aware);
  CHECK(report.kinks_skipped == 1);
  CHECK(report.coordinates_checked == 2);
  CHECK(report.max_relative_error < 1e-8);
}

TEST_CASE("every primitive passes gradient checks on random shapes") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = dim(rng), in = dim(rng), out = dim(rng);
    Parameter x = random_param("x", {b, in}, rng);
    Parameter w = random_param("w", {out, in}, rng);
    Parameter bias = random_param("b", {out}, rng);
    Parameter s = random_param("s", {1}, rng);
    Parameter* ps[] = {&x, &w, &bias, &s};
    auto r = finite_diff_check(
        [&] {
          Tensor y = linear(x.value, w.value, bias.value);
          Tensor parts[] = {tanh(y), sigmoid(y), relu(scale_by(y, s.value)), exp(scale(y, 0.3))};
          Tensor cat = concat_cols(parts);
          Tensor both[] = {cat, mul(cat, cat)};
          Tensor rows = concat_rows(both);
          Tensor ls = log_softmax_groups(slice_cols(rows, 0, 2 * out), out);
          Tensor sm = softmax(slice_rows(rows, b, b));
          Tensor terms[] = {sum(mul(ls, ls)), sum(square(sm)), sum(sub(slice_cols(slice_rows(rows, 0, b), out, out), reshape(y, {b, out})))};
          return add_n(terms);
        },
        ps);
    CHECK(r.max_relative_error <= 1e-4);

    const std::size_t c = dim(rng), h = 4 + dim(rng), kk = std::min<std::size_t>(dim(rng), 3), st = dim(rng) % 2 + 1;
    Parameter img = random_param("img", {b, c, h, h}, rng);
    Parameter kern = random_param("k", {out, c, kk, kk}, rng);
    Parameter kb = random_param("kb", {out}, rng);
    Parameter* cps[] = {&img, &kern, &kb};
    auto rc = finite_diff_check([&] { return sum(square(conv2d(img.value, kern.value, kb.value, st))); }, cps);
    CHECK(rc.max_relative_error <= 1e-4);

    const std::size_t n = dim(rng);
    Parameter lx = random_param("lx", {b, in}, rng);
    Parameter wi = random_param("wi", {4 * n, in}, rng);
    Parameter wh = random_param("wh", {4 * n, n}, rng);
    Parameter lb = random_param("lb", {4 * n}, rng);
    Parameter* lps[] = {&lx, &wi, &wh, &lb};
    auto rl = finite_diff_check(
        [&] {
          LstmState st0 = lstm_zero_state(b, n);
          LstmState s1 = lstm_step(lx.value, st0, wi.value, wh.value, lb.value);
          LstmState s2 = lstm_step(scale(lx.value, -0.5), s1, wi.value, wh.value, lb.value);
          Tensor terms[] = {sum(square(s2.h)), sum(s2.c)};
          return add_n(terms);
        },
        lps);
    CHECK(rl.max_relative_error <= 1e-4);
  }
}

TEST_CASE("lstm_step") {
  auto zero = lstm_step(Tensor::full({2, 3}, 0.7), lstm_zero_state(2, 4), Tensor::zeros({16, 3}), Tensor::zeros({16, 4}),
                        Tensor::zeros({16}));
  for (double v : zero.h.data()) CHECK(v == 0.0);
  for (double v : zero.c.data()) CHECK(v == 0.0);

  std::mt19937_64 rng(8);
  const std::size_t n = 3, in = 2;
  Tensor wi = random_tensor({4 * n, in}, rng), wh = random_tensor({4 * n, n}, rng), b = random_tensor({4 * n}, rng);
  Tensor x = random_tensor({1, in}, rng);
  std::vector<double> h(n, 0.0), c(n, 0.0);
  LstmState st = lstm_zero_state(1, n);
  for (int step = 0; step < 6; ++step) {
    st = lstm_step(x, st, wi, wh, b);
    std::vector<double> pre(4 * n);
    for (std::size_t r = 0; r < 4 * n; ++r) {
      double a = b.at(r);
      for (std::size_t j = 0; j < in; ++j) a += wi.at(r * in + j) * x.at(j);
      for (std::size_t j = 0; j < n; ++j) a += wh.at(r * n + j) * h[j];
      pre[r] = a;
    }
    for (std::size_t u = 0; u < n; ++u) {
      const double ig = sigmoid_ref(pre[u]), fg = sigmoid_ref(pre[n + u]);
      const double g = std::tanh(pre[2 * n + u]), og = sigmoid_ref(pre[3 * n + u]);
      c[u] = fg * c[u] + ig * g;
      h[u] = og * std::tanh(c[u]);
    }
    for (std::size_t u = 0; u < n; ++u) {
      CHECK(st.h.at(u) == doctest::Approx(h[u]).epsilon(1e-13));
      CHECK(st.c.at(u) == doctest::Approx(c[u]).epsilon(1e-13));
    }
  }

  Tensor rows = concat_rows(std::vector<Tensor>{x, x});
  auto twin = lstm_step(rows, lstm_zero_state(2, n), wi, wh, b);
  for (std::size_t u = 0; u < n; ++u) CHECK(twin.h.at(u) == twin.h.at(n + u));

  CHECK_THROWS_AS((void)lstm_step(x, lstm_zero_state(1, n + 1), wi, wh, b), DimensionError);
}

TEST_CASE("ops without an active tape record nothing") {
  Parameter w("w", Tensor::full({2, 2}, 1.0));
  Tape tape;
  Tensor y = linear(Tensor::full({1, 2}, 1.0), w.value, Tensor());
  CHECK(tape.size() == 0);
  {
    TapeScope scope(tape);
    NoGradScope off;
    (void)linear(Tensor::full({1, 2}, 1.0), w.value, Tensor());
  }
  CHECK(tape.size() == 0);
  {
    TapeScope scope(tape);
    (void)linear(Tensor::full({1, 2}, 1.0), w.value, Tensor());
  }
  CHECK(tape.size() > 0);
}

TEST_CASE("forward is bit-deterministic") {
  std::mt19937_64 a(21), b(21);
  auto ka = uniform_fan_in({4, 3, 3, 3}, 27, a), kb = uniform_fan_in({4, 3, 3, 3}, 27, b);
  for (std::size_t i = 0; i < ka.numel(); ++i) CHECK(ka.at(i) == kb.at(i));
  for (double v : ka.data()) CHECK(std::abs(v) <= 1.0 / std::sqrt(27.0));
  std::mt19937_64 r(1);
  auto x = random_tensor({2, 3, 9, 9}, r);
  auto y1 = conv2d(x, ka, Tensor(), 2), y2 = conv2d(x, kb, Tensor(), 2);
  for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1.at(i) == y2.at(i));
}

TEST_CASE("layer spec validation") {
  CHECK_NOTHROW(LayerSpec::conv(8, 8, 4).validate());
  CHECK_THROWS_AS(LayerSpec::conv(8, 0, 4).validate(), std::invalid_argument);
  CHECK_THROWS_AS(LayerSpec::conv(8, 3, 0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(LayerSpec::linear(0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(LayerSpec::lstm(0).validate(), std::invalid_argument);
  CHECK(layer_kind_from_string(to_string(LayerKind::lstm)) == LayerKind::lstm);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  std::mt19937_64 rng(6);
  Parameter a = random_param("col0/fc/weight", {3, 4}, rng);
  Parameter b = random_param("col0/fc/bias", {3}, rng);
  b.freeze();
  const Parameter* in[] = {&a, &b};
  auto ck = Checkpoint::from_parameters(in, 0xabcdef);
  auto bytes = ck.serialize();
  auto back = Checkpoint::deserialize(bytes);
  CHECK(back.architecture_hash == 0xabcdef);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].frozen);
  CHECK(back.serialize() == bytes);

  Parameter a2("col0/fc/weight", Tensor::zeros({3, 4}));
  Parameter b2("col0/fc/bias", Tensor::zeros({3}));
  Parameter* out[] = {&a2, &b2};
  back.apply_to(out);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a2.value.at(i) == a.value.at(i));
  for (std::size_t i = 0; i < b.numel(); ++i) CHECK(b2.value.at(i) == b.value.at(i));

  Parameter wrong("col0/fc/weight", Tensor::zeros({4, 3}));
  Parameter* bad[] = {&wrong, &b2};
  CHECK_THROWS_AS(back.apply_to(bad), CheckpointError);

  bytes[0] = 'X';
  CHECK_THROWS_AS(Checkpoint::deserialize(bytes), CheckpointError);
  auto truncated = ck.serialize();
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(Checkpoint::deserialize(truncated), CheckpointError);
}

TEST_CASE("fnv1a64 known values") {
  CHECK(fnv1a64(std::string_view("")) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64(std::string_view("a")) == 0xaf63dc4c8601ec8cULL);
}
