#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "test_util.hpp"
#include "vmamba/errors.hpp"
#include "vmamba/ops.hpp"
#include "vmamba/tensor.hpp"

using namespace vmamba;
using namespace vmamba::testing;

TEST_CASE("tensor construction validates shape against data") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t[4] == 5.0);
  CHECK(Tensor::zeros({0, 4}).numel() == 0);
}

TEST_CASE("non-finite results are rejected") {
  const Tensor big({1}, {800.0});
  CHECK_THROWS_AS(exp(big), NumericError);
}

TEST_CASE("matmul examples") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(eye, m).to_vector() == std::vector<double>{1, 2, 3, 4});
  CHECK(matmul(m, Tensor({2, 1}, {5, 6})).to_vector() == std::vector<double>{17, 39});

  const Tensor empty = matmul(Tensor::zeros({3, 0}), Tensor::zeros({0, 2}));
  CHECK(empty.shape() == Shape{3, 2});
  for (double v : empty.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(matmul(m, Tensor::zeros({3, 1})), DimensionError);
}

TEST_CASE("matmul is associative on random conforming shapes") {
  Gen gen(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t a = random_size(gen, 1, 6), b = random_size(gen, 1, 6), c = random_size(gen, 1, 6),
                      d = random_size(gen, 1, 6);
    const Tensor x = random_tensor({a, b}, gen), y = random_tensor({b, c}, gen), z = random_tensor({c, d}, gen);
    const Tensor left = matmul(matmul(x, y), z), right = matmul(x, matmul(y, z));
    double scale = 1e-300;
    for (double v : left.data()) scale = std::max(scale, std::abs(v));
    CHECK(max_abs_diff(left, right) / scale < 1e-10);
  }
}

TEST_CASE("layer_norm examples") {
  const Tensor ones = Tensor::full({3}, 1.0), zeros3 = Tensor::zeros({3});
  auto out = layer_norm(Tensor({1, 3}, {5, 5, 5}), ones, zeros3);
  for (double v : out.data()) CHECK(v == 0.0);

  auto pair = layer_norm(Tensor({1, 2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-14);
  CHECK(pair[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(pair[1] == doctest::Approx(1.0).epsilon(1e-12));

  Gen gen(3);
  const Tensor beta({3}, {0.25, -1.5, 2.0});
  auto affine = layer_norm(random_tensor({4, 3}, gen), Tensor::zeros({3}), beta);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(affine[r * 3 + c] == beta[c]);

  CHECK_THROWS_AS(layer_norm(random_tensor({2, 4}, gen), ones, zeros3), DimensionError);
}

TEST_CASE("layer_norm normalizes every position") {
  Gen gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = random_size(gen, 1, 8), c = random_size(gen, 2, 16);
    const Tensor x = random_tensor({rows, c}, gen, -3.0, 5.0);
    const auto y = layer_norm(x, Tensor::full({c}, 1.0), Tensor::zeros({c}), 1e-12);
    for (std::size_t r = 0; r < rows; ++r) {
      double m = 0.0, v = 0.0;
      for (std::size_t j = 0; j < c; ++j) m += y[r * c + j];
      m /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) v += (y[r * c + j] - m) * (y[r * c + j] - m);
      v /= static_cast<double>(c);
      CHECK(std::abs(m) < 1e-9);
      CHECK(std::abs(v - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("conv2d examples") {
  Gen gen(7);
  const Tensor x = random_tensor({1, 4, 5}, gen);
  CHECK(bitwise_equal(conv2d(x, Tensor({1, 1, 1, 1}, {1.0}), 1, 0), x));

  std::vector<double> hot(25, 0.0);
  hot[2 * 5 + 2] = 1.0;
  const auto y = conv2d(Tensor({1, 5, 5}, hot), Tensor::full({1, 1, 3, 3}, 1.0), 1, 1);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      const bool inside = r >= 1 && r <= 3 && c >= 1 && c <= 3;
      CHECK(y[r * 5 + c] == (inside ? 1.0 : 0.0));
    }

  CHECK(conv2d(random_tensor({2, 4, 4}, gen), random_tensor({3, 2, 3, 3}, gen), 2, 1).shape() == Shape{3, 2, 2});
  CHECK_THROWS_AS(conv2d(x, random_tensor({1, 1, 2, 2}, gen), 1, 0), ConfigurationError);
  CHECK_THROWS_AS(conv2d(x, random_tensor({1, 2, 3, 3}, gen), 1, 1), DimensionError);
}

TEST_CASE("conv2d matches direct summation") {
  Gen gen(8);
  const std::size_t cin = 2, cout = 3, h = 5, w = 6, k = 3, stride = 2, pad = 1;
  const Tensor x = random_tensor({cin, h, w}, gen), wt = random_tensor({cout, cin, k, k}, gen);
  const auto y = conv2d(x, wt, stride, pad);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  REQUIRE(y.shape() == Shape{cout, oh, ow});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < cin; ++i)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              const long yy = static_cast<long>(r * stride + a) - static_cast<long>(pad);
              const long xx = static_cast<long>(c * stride + b) - static_cast<long>(pad);
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              s += wt[((o * cin + i) * k + a) * k + b] * x[(i * h + static_cast<std::size_t>(yy)) * w +
                                                           static_cast<std::size_t>(xx)];
            }
        CHECK(y[(o * oh + r) * ow + c] == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("backward examples") {
  Tensor x({3}, {1, -2, 3}, true);
  sum(square(x)).backward();
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, -4, 6});

  // A second backward accumulates.
  sum(square(x)).backward();
  CHECK(x.grad()[2] == 12.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());

  Tensor leaf({3}, {1, 2, 3}, true);
  const Tensor cut = leaf.detach();
  CHECK_THROWS_AS(sum(square(cut)).backward(), ContractError);
  CHECK_FALSE(leaf.has_grad());

  CHECK_THROWS_AS(square(x).backward(), ContractError);
}

TEST_CASE("layer_norm gradient of sum matches finite differences") {
  Gen gen(21);
  const Tensor x = random_tensor({1, 4}, gen);
  auto r = check_gradients(
      [](const std::vector<Tensor>& in) {
        return layer_norm(in[0], Tensor::full({4}, 1.0), Tensor::zeros({4}));
      },
      {x});
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("gradients of tensor operations match central differences") {
  Gen gen(1234);
  using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
  struct Case {
    const char* name;
    Fn fn;
    std::vector<Tensor> inputs;
  };
  const std::vector<Case> cases = {
      {"matmul", [](auto& in) { return matmul(in[0], in[1]); }, {random_tensor({3, 4}, gen), random_tensor({4, 2}, gen)}},
      {"layer_norm", [](auto& in) { return layer_norm(in[0], in[1], in[2]); },
       {random_tensor({3, 5}, gen), random_tensor({5}, gen), random_tensor({5}, gen)}},
      {"conv2d", [](auto& in) { return conv2d(in[0], in[1], 1, 1); },
       {random_tensor({2, 4, 4}, gen), random_tensor({3, 2, 3, 3}, gen)}},
      {"conv2d stride 2", [](auto& in) { return conv2d(in[0], in[1], 2, 1); },
       {random_tensor({2, 5, 4}, gen), random_tensor({2, 2, 3, 3}, gen)}},
      {"conv_transpose2d", [](auto& in) { return conv_transpose2d(in[0], in[1], 2); },
       {random_tensor({2, 3, 3}, gen), random_tensor({2, 3, 2, 2}, gen)}},
      {"linear", [](auto& in) { return linear(in[0], in[1], in[2]); },
       {random_tensor({4, 3}, gen), random_tensor({3, 5}, gen), random_tensor({5}, gen)}},
      {"gelu", [](auto& in) { return gelu(in[0]); }, {random_tensor({12}, gen, -3, 3)}},
      {"softplus", [](auto& in) { return softplus(in[0]); }, {random_tensor({12}, gen, -4, 4)}},
      {"exp", [](auto& in) { return vmamba::exp(in[0]); }, {random_tensor({8}, gen)}},
      {"mul/add/sub", [](auto& in) { return sub(add(mul(in[0], in[1]), in[0]), in[1]); },
       {random_tensor({6}, gen), random_tensor({6}, gen)}},
      {"trailing broadcasts", [](auto& in) { return add_trailing(mul_trailing(in[0], in[1]), in[2]); },
       {random_tensor({3, 4}, gen), random_tensor({4}, gen), random_tensor({4}, gen)}},
      {"channel bias", [](auto& in) { return add_channel_bias(in[0], in[1]); },
       {random_tensor({3, 2, 2}, gen), random_tensor({3}, gen)}},
      {"transpose", [](auto& in) { return transpose(in[0]); }, {random_tensor({3, 5}, gen)}},
      {"concat/slice", [](auto& in) { return slice(concat({in[0], in[1]}), 1, 4); },
       {random_tensor({2, 3}, gen), random_tensor({3, 3}, gen)}},
      {"gather/scatter", [](auto& in) { return scatter_add_rows(gather_rows(in[0], {2, 0, 2, 1}), {1, 1, 0, 3}, 4); },
       {random_tensor({3, 2}, gen)}},
      {"reflect pad and crop", [](auto& in) { return crop2d(square(reflect_pad2d(in[0], 2, 3)), 3, 3); },
       {random_tensor({2, 3, 3}, gen)}},
      {"upsample_bilinear", [](auto& in) { return upsample_bilinear(in[0], 5, 7); }, {random_tensor({2, 3, 4}, gen)}},
      {"charbonnier", [](auto& in) { return charbonnier_loss(in[0], in[1], 1e-3); },
       {random_tensor({10}, gen), random_tensor({10}, gen)}},
      {"mean", [](auto& in) { return mean(square(in[0])); }, {random_tensor({7}, gen)}},
      {"reshape view", [](auto& in) { return matmul(in[0].reshape({2, 3}), in[1]); },
       {random_tensor({6}, gen), random_tensor({3, 2}, gen)}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(check_gradients(c.fn, c.inputs).max_rel_error < 1e-4);
  }
}

TEST_CASE("charbonnier loss examples") {
  const Tensor a({4}, {0.1, 0.2, 0.3, 0.4});
  CHECK(charbonnier_loss(a, a, 1e-3).item() == doctest::Approx(1e-3).epsilon(1e-12));
  const Tensor b({4}, {0.2, 0.3, 0.4, 0.5});
  CHECK(charbonnier_loss(b, a, 1e-12).item() == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("reflect padding mirrors without repeating the edge") {
  const Tensor x({1, 1, 3}, {1, 2, 3});
  CHECK(reflect_pad2d(x, 0, 2).to_vector() == std::vector<double>{1, 2, 3, 2, 1});
}

TEST_CASE("tensor save/load round trip is bit-exact") {
  TempDir dir("tensor_io");
  Gen gen(4);
  const Tensor t = random_tensor({2, 3, 4}, gen, -1e6, 1e6);
  save_tensor(t, dir.path() / "t.vsst");
  CHECK(bitwise_equal(load_tensor(dir.path() / "t.vsst"), t));

  std::ofstream(dir.path() / "bad.vsst") << "NOPE";
  CHECK_THROWS_AS(load_tensor(dir.path() / "bad.vsst"), IngestionError);
}

TEST_CASE("grad mode guard disables graph construction") {
  Tensor x({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = square(x);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
}
