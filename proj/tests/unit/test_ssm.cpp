#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>

#include "test_util.hpp"
#include "vmamba/errors.hpp"
#include "vmamba/ssm.hpp"

using namespace vmamba;
using namespace vmamba::testing;

namespace {

SSMParams random_diagonal(Gen& gen, std::size_t d) {
  return SSMParams::make_diagonal(uniform_values(d, gen, -3.0, -0.05), uniform_values(d, gen),
                                  uniform_values(d, gen), uniform_values(1, gen)[0]);
}

DiscreteSSM scalar_discrete(double abar, double bbar, double c, double d) {
  DiscreteSSM s;
  s.A_bar = Tensor({1}, {abar});
  s.B_bar = Tensor({1, 1}, {bbar});
  s.C = Tensor({1, 1}, {c});
  s.D = d;
  s.delta = 1.0;
  return s;
}

SSMParams dense(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const auto n = static_cast<std::size_t>(a.rows());
  SSMParams p;
  std::vector<double> av(n * n), bv(n), cv(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    bv[i] = b(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < n; ++j) av[i * n + j] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  p.A = Tensor({n, n}, std::move(av));
  p.B = Tensor({n, 1}, std::move(bv));
  p.C = Tensor({1, n}, std::move(cv));
  p.diagonal = false;
  return p;
}

}  // namespace

TEST_CASE("zoh examples") {
  auto zero = discretize_zoh(SSMParams::make_diagonal({0.0}, {1.0}, {1.0}, 0.0), 0.5);
  CHECK(zero.A_bar[0] == 1.0);
  CHECK(zero.B_bar[0] == 0.5);

  auto decay = discretize_zoh(SSMParams::make_diagonal({-1.0}, {1.0}, {1.0}, 0.0), 0.1);
  CHECK(decay.A_bar[0] == doctest::Approx(std::exp(-0.1)).epsilon(1e-15));
  CHECK(decay.A_bar[0] == doctest::Approx(0.9048374).epsilon(1e-7));
  CHECK(decay.B_bar[0] == doctest::Approx(1.0 - std::exp(-0.1)).epsilon(1e-14));

  auto tiny = discretize_zoh(SSMParams::make_diagonal({-2.0, 3.0}, {1.0, -4.0}, {1.0, 1.0}, 0.0), 1e-12);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::abs(tiny.A_bar[i] - 1.0) < 1e-9);
    CHECK(std::abs(tiny.B_bar[i]) < 1e-9);
  }

  auto euler = discretize_zoh(SSMParams::make_diagonal({-1.0}, {2.0}, {1.0}, 0.0), 0.1, BbarMode::kEuler);
  CHECK(euler.B_bar[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(euler.A_bar[0] == doctest::Approx(std::exp(-0.1)).epsilon(1e-15));
}

TEST_CASE("zoh rejects non-positive timescales") {
  const auto p = SSMParams::make_diagonal({-1.0}, {1.0}, {1.0}, 0.0);
  CHECK_THROWS_AS(discretize_zoh(p, 0.0), DomainError);
  CHECK_THROWS_AS(discretize_zoh(p, -0.5), DomainError);
  CHECK_THROWS_AS(SSMParams::make_diagonal({}, {}, {}, 0.0).validate(), DimensionError);
}

TEST_CASE("diagonal A_bar is the entrywise exponential") {
  Gen gen(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = random_size(gen, 1, 12);
    const auto p = random_diagonal(gen, d);
    const double delta = uniform_values(1, gen, 1e-4, 2.0)[0];
    const auto s = discretize_zoh(p, delta);
    for (std::size_t i = 0; i < d; ++i) CHECK(s.A_bar[i] == std::exp(delta * p.A[i]));
  }
}

// exp([[dA, dB], [0, 0]]) = [[A_bar, B_bar], [0, 1]] for the ZOH pair.
TEST_CASE("dense zoh matches the augmented-matrix exponential") {
  Gen gen(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<Eigen::Index>(random_size(gen, 1, 5));
    Eigen::MatrixXd a(n, n);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      b(i) = uniform_values(1, gen)[0];
      for (Eigen::Index j = 0; j < n; ++j) a(i, j) = uniform_values(1, gen)[0];
    }
    const double delta = uniform_values(1, gen, 0.01, 1.0)[0];
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = delta * a;
    aug.topRightCorner(n, 1) = delta * b;
    const Eigen::MatrixXd e = aug.exp();

    const auto s = discretize_zoh(dense(a, b), delta);
    for (Eigen::Index i = 0; i < n; ++i) {
      CHECK(std::abs(s.B_bar[static_cast<std::size_t>(i)] - e(i, n)) < 1e-10);
      for (Eigen::Index j = 0; j < n; ++j)
        CHECK(std::abs(s.A_bar[static_cast<std::size_t>(i * n + j)] - e(i, j)) < 1e-12);
    }
  }
}

TEST_CASE("dense symmetric A matches the eigendecomposition") {
  Gen gen(29);
  const Eigen::Index n = 4;
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = uniform_values(1, gen)[0];
  const Eigen::MatrixXd a = -(m * m.transpose()) - 0.1 * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b(n);
  b << 1.0, -0.5, 0.25, 2.0;
  const double delta = 0.3;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::MatrixXd q = eig.eigenvectors();
  const Eigen::VectorXd lam = eig.eigenvalues();
  Eigen::VectorXd ea(n), gain(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ea(i) = std::exp(delta * lam(i));
    gain(i) = std::expm1(delta * lam(i)) / lam(i);
  }
  const Eigen::MatrixXd abar = q * ea.asDiagonal() * q.transpose();
  const Eigen::VectorXd bbar = q * gain.asDiagonal() * q.transpose() * b;

  const auto s = discretize_zoh(dense(a, b), delta);
  for (Eigen::Index i = 0; i < n; ++i) {
    CHECK(std::abs(s.B_bar[static_cast<std::size_t>(i)] - bbar(i)) < 1e-12);
    for (Eigen::Index j = 0; j < n; ++j) CHECK(std::abs(s.A_bar[static_cast<std::size_t>(i * n + j)] - abar(i, j)) < 1e-12);
  }
}

TEST_CASE("singular dense A falls back to the series") {
  // Nilpotent A: exp(dA) = I + dA and B_bar = d(I + dA/2)B exactly.
  Eigen::MatrixXd a(2, 2);
  a << 0.0, 1.0, 0.0, 0.0;
  Eigen::VectorXd b(2);
  b << 0.5, 2.0;
  const double delta = 0.4;
  const auto s = discretize_zoh(dense(a, b), delta);
  CHECK(s.A_bar[0] == doctest::Approx(1.0));
  CHECK(s.A_bar[1] == doctest::Approx(0.4));
  CHECK(s.A_bar[2] == doctest::Approx(0.0));
  CHECK(s.A_bar[3] == doctest::Approx(1.0));
  CHECK(s.B_bar[0] == doctest::Approx(delta * (0.5 + delta / 2.0 * 2.0)).epsilon(1e-14));
  CHECK(s.B_bar[1] == doctest::Approx(delta * 2.0).epsilon(1e-14));
}

TEST_CASE("scan examples") {
  const Tensor zeros = Tensor::zeros({9});
  Gen gen(31);
  const auto ssm = discretize_zoh(random_diagonal(gen, 4), 0.3);
  for (auto algo : {ScanAlgorithm::kSequential, ScanAlgorithm::kParallel, ScanAlgorithm::kConvolutional}) {
    const auto y = scan(ssm, zeros, algo);
    for (double v : y.data()) CHECK(v == 0.0);
  }

  const Tensor x({3}, {1, 3, 5});
  const auto memoryless = scalar_discrete(0.0, 1.0, 2.0, 0.0);
  CHECK(scan_sequential(memoryless, x).to_vector() == std::vector<double>{2, 6, 10});

  const auto half = scalar_discrete(0.5, 1.0, 1.0, 0.0);
  const Tensor ones = Tensor::full({3}, 1.0);
  CHECK(scan_sequential(half, ones).to_vector() == std::vector<double>{1, 1.5, 1.75});
  CHECK(scan_parallel(half, ones).to_vector() == std::vector<double>{1, 1.5, 1.75});
  CHECK(convolution_kernel(half, 3) == std::vector<double>{1, 0.5, 0.25});

  const auto k0 = convolution_kernel(memoryless, 4);
  CHECK(k0 == std::vector<double>{2, 0, 0, 0});
  CHECK(scan_convolutional(memoryless, x).to_vector() == std::vector<double>{2, 6, 10});

  const Tensor one({1}, {0.7});
  const auto single = scan_parallel(ssm, one);
  double expect = ssm.D * 0.7;
  for (std::size_t i = 0; i < 4; ++i) expect += ssm.C[i] * ssm.B_bar[i] * 0.7;
  CHECK(single[0] == doctest::Approx(expect).epsilon(1e-15));
  CHECK(single[0] == scan_sequential(ssm, one)[0]);
}

TEST_CASE("scan modes agree") {
  Gen gen(37);
  for (std::size_t len : {std::size_t{7}, std::size_t{64}, std::size_t{1024}}) {
    for (int trial = 0; trial < 4; ++trial) {
      const auto ssm = discretize_zoh(random_diagonal(gen, random_size(gen, 1, 16)), uniform_values(1, gen, 0.01, 1.0)[0]);
      const Tensor x = random_tensor({len}, gen);
      const auto seq = scan_sequential(ssm, x), par = scan_parallel(ssm, x), conv = scan_convolutional(ssm, x);
      const double tol = len <= 7 ? 1e-10 : (len <= 64 ? 1e-9 : 1e-8);
      CHECK(max_abs_diff(seq, par) < tol);
      CHECK(max_abs_diff(seq, conv) < tol);
    }
  }
}

TEST_CASE("parallel recurrence handles every length up to 70") {
  Gen gen(41);
  for (std::size_t len = 0; len <= 70; ++len) {
    const auto a = uniform_values(len, gen, -1.0, 1.0), b = uniform_values(len, gen);
    std::vector<double> hs(len), hp(len);
    linear_recurrence_sequential(a, b, hs);
    linear_recurrence_parallel(a, b, hp);
    for (std::size_t t = 0; t < len; ++t) CHECK(std::abs(hs[t] - hp[t]) < 1e-12);
  }
}

TEST_CASE("step response matches the continuous solution") {
  Gen gen(43);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = -std::exp(uniform_values(1, gen, std::log(0.05), std::log(5.0))[0]);
    const double b = uniform_values(1, gen)[0], c = uniform_values(1, gen)[0], dskip = uniform_values(1, gen)[0];
    const double u = uniform_values(1, gen, -2.0, 2.0)[0], delta = uniform_values(1, gen, 0.01, 0.5)[0];
    const auto ssm = discretize_zoh(SSMParams::make_diagonal({a}, {b}, {c}, dskip), delta);
    const std::size_t len = 200;
    const auto y = scan_sequential(ssm, Tensor::full({len}, u));
    for (std::size_t k = 0; k < len; ++k) {
      const double t = static_cast<double>(k + 1) * delta;
      const double h = b * u * (std::exp(a * t) - 1.0) / a;
      CHECK(std::abs(y[k] - (c * h + dskip * u)) < 1e-6);
    }
  }
}

TEST_CASE("scans are linear in the input") {
  Gen gen(47);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ssm = discretize_zoh(random_diagonal(gen, random_size(gen, 1, 8)), 0.2);
    const std::size_t len = random_size(gen, 1, 200);
    const Tensor x1 = random_tensor({len}, gen), x2 = random_tensor({len}, gen);
    const double alpha = uniform_values(1, gen, -2, 2)[0], beta = uniform_values(1, gen, -2, 2)[0];
    std::vector<double> mix(len);
    for (std::size_t t = 0; t < len; ++t) mix[t] = alpha * x1[t] + beta * x2[t];
    for (auto algo : {ScanAlgorithm::kSequential, ScanAlgorithm::kParallel, ScanAlgorithm::kConvolutional}) {
      const auto y = scan(ssm, Tensor({len}, mix), algo);
      const auto y1 = scan(ssm, x1, algo), y2 = scan(ssm, x2, algo);
      for (std::size_t t = 0; t < len; ++t) CHECK(std::abs(y[t] - (alpha * y1[t] + beta * y2[t])) < 1e-10);
    }
  }
}

TEST_CASE("states stay within the geometric bound for stable A") {
  Gen gen(53);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = random_size(gen, 1, 6), len = 500;
    const auto p = random_diagonal(gen, d);
    const auto full = discretize_zoh(p, uniform_values(1, gen, 0.01, 1.0)[0]);
    const Tensor x = random_tensor({len}, gen, -3.0, 3.0);
    double xmax = 0.0;
    for (double v : x.data()) xmax = std::max(xmax, std::abs(v));
    // Reading one state component at a time through a unit C.
    for (std::size_t i = 0; i < d; ++i) {
      DiscreteSSM one = scalar_discrete(full.A_bar[i], full.B_bar[i], 1.0, 0.0);
      const double bound = std::abs(full.B_bar[i]) * xmax / (1.0 - full.A_bar[i]);
      const auto states = scan_parallel(one, x);
      for (double h : states.data()) CHECK(std::abs(h) <= bound * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("selective scan equals the per-step hand recurrence") {
  Gen gen(59);
  const std::size_t len = 4, d = 2;
  const Tensor x = random_tensor({len}, gen);
  const auto base = SSMParams::make_diagonal({-0.7, -2.5}, {1.0, 1.0}, {1.0, 1.0}, 0.3);
  SelectiveParams sel{random_tensor({len, d}, gen), random_tensor({len, d}, gen),
                      random_tensor({len}, gen, 0.05, 0.9)};

  std::vector<double> expect(len);
  double h[2] = {0.0, 0.0};
  for (std::size_t t = 0; t < len; ++t) {
    double y = base.D * x[t];
    for (std::size_t i = 0; i < d; ++i) {
      const double a = base.A[i], dt = sel.delta[t];
      const double abar = std::exp(dt * a);
      const double bbar = (abar - 1.0) / a * sel.B[t * d + i];
      h[i] = abar * h[i] + bbar * x[t];
      y += sel.C[t * d + i] * h[i];
    }
    expect[t] = y;
  }
  const auto seq = scan_sequential(sel, base, x), par = scan_parallel(sel, base, x);
  for (std::size_t t = 0; t < len; ++t) {
    CHECK(std::abs(seq[t] - expect[t]) < 1e-10);
    CHECK(std::abs(par[t] - expect[t]) < 1e-10);
  }
  CHECK_THROWS_AS(scan_convolutional(sel, base, x), ContractError);
  CHECK_THROWS_AS(selective_scan(x.reshape({len, 1}), sel.delta, base.A.reshape({1, d}), sel.B, sel.C,
                                 Tensor({1}, {0.3}), ScanAlgorithm::kConvolutional),
                  ContractError);
}

TEST_CASE("selective scan modes agree on long multi-channel inputs") {
  Gen gen(61);
  const std::size_t len = 777, ch = 3, d = 5;
  const Tensor x = random_tensor({len, ch}, gen), delta = random_tensor({len}, gen, 0.001, 0.5);
  const Tensor a = random_tensor({ch, d}, gen, -4.0, -0.1), b = random_tensor({len, d}, gen),
               c = random_tensor({len, d}, gen), dskip = random_tensor({ch}, gen);
  for (auto mode : {BbarMode::kExact, BbarMode::kEuler}) {
    const auto seq = selective_scan(x, delta, a, b, c, dskip, ScanAlgorithm::kSequential, mode);
    const auto par = selective_scan(x, delta, a, b, c, dskip, ScanAlgorithm::kParallel, mode);
    CHECK(max_abs_diff(seq, par) < 1e-8);
  }
}

TEST_CASE("selective parameterization examples") {
  Gen gen(67);
  Rng rng(3);
  auto head = SelectiveHead::init(4, 3, rng);
  CHECK(std::log1p(std::exp(default_delta_bias())) == doctest::Approx(0.01).epsilon(1e-12));

  const auto zero_x = selective_parameterize(Tensor::zeros({5, 4}), head);
  for (double v : zero_x.B.data()) CHECK(v == 0.0);
  for (double v : zero_x.C.data()) CHECK(v == 0.0);
  for (double v : zero_x.delta.data()) CHECK(v == doctest::Approx(0.01).epsilon(1e-12));

  head.w_delta = Tensor::zeros({4, 1});
  head.b_delta = Tensor({1}, {0.5});
  const auto sel = selective_parameterize(random_tensor({6, 4}, gen), head);
  CHECK(sel.length() == 6);
  for (double v : sel.delta.data()) CHECK(v == doctest::Approx(std::log1p(std::exp(0.5))).epsilon(1e-14));
}

TEST_CASE("deltas are strictly positive for arbitrary inputs") {
  Gen gen(71);
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t feat = random_size(gen, 1, 8);
    auto head = SelectiveHead::init(feat, 4, rng);
    const auto sel = selective_parameterize(random_tensor({random_size(gen, 1, 30), feat}, gen, -20.0, 20.0), head);
    for (double v : sel.delta.data()) CHECK(v > 0.0);
  }
}

TEST_CASE("a initialization stays in the stable range") {
  Rng rng(9);
  const auto u = init_a_log(16, 8, rng);
  for (double v : u.data()) {
    CHECK(v >= std::log(0.5));
    CHECK(v <= std::log(8.0));
  }
}

TEST_CASE("selective scan gradients match central differences") {
  Gen gen(73);
  const std::size_t len = 6, ch = 3, d = 4;
  for (auto algo : {ScanAlgorithm::kSequential, ScanAlgorithm::kParallel}) {
    for (auto mode : {BbarMode::kExact, BbarMode::kEuler}) {
      const auto r = check_gradients(
          [algo, mode](const std::vector<Tensor>& in) {
            return selective_scan(in[0], in[1], in[2], in[3], in[4], in[5], algo, mode);
          },
          {random_tensor({len, ch}, gen), random_tensor({len}, gen, 0.05, 0.8), random_tensor({ch, d}, gen, -3, -0.2),
           random_tensor({len, d}, gen), random_tensor({len, d}, gen), random_tensor({ch}, gen)});
      CAPTURE(r.worst_input);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("gradient of the zoh gain is accurate near a zero exponent") {
  Gen gen(79);
  const std::size_t len = 5, ch = 2, d = 2;
  const auto r = check_gradients(
      [](const std::vector<Tensor>& in) { return selective_scan(in[0], in[1], in[2], in[3], in[4], in[5]); },
      {random_tensor({len, ch}, gen), random_tensor({len}, gen, 0.001, 0.01),
       Tensor({ch, d}, {-1e-3, -0.05, -2e-4, -0.1}), random_tensor({len, d}, gen), random_tensor({len, d}, gen),
       random_tensor({ch}, gen)});
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("selective parameterization gradients match central differences") {
  Gen gen(83);
  const std::size_t len = 5, feat = 3, d = 2;
  const auto r = check_gradients(
      [](const std::vector<Tensor>& in) {
        SelectiveHead head{in[1], in[2], in[3], in[4]};
        const auto sel = selective_parameterize(in[0], head);
        return concat({sel.B.reshape({len * d}), sel.C.reshape({len * d}), sel.delta});
      },
      {random_tensor({len, feat}, gen), random_tensor({feat, d}, gen), random_tensor({feat, d}, gen),
       random_tensor({feat, 1}, gen), random_tensor({1}, gen)});
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("scan algorithm names round trip") {
  for (auto algo : {ScanAlgorithm::kSequential, ScanAlgorithm::kParallel, ScanAlgorithm::kConvolutional})
    CHECK(parse_scan_algorithm(to_string(algo)) == algo);
  for (auto mode : {BbarMode::kExact, BbarMode::kEuler}) CHECK(parse_bbar_mode(to_string(mode)) == mode);
  CHECK_THROWS_AS(parse_scan_algorithm("fft"), ConfigurationError);
}
