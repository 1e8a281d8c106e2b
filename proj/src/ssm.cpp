#include "vmamba/ssm.hpp"

#include <bit>
#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "vmamba/autograd.hpp"
#include "vmamba/errors.hpp"
#include "vmamba/ops.hpp"

namespace vmamba {

namespace {

constexpr double kSeriesThreshold = 1e-8;

// Bbar / B for one diagonal entry: delta * expm1(z) / z with z = delta * a.
double zoh_gain(double delta, double a) {
  const double z = delta * a;
  if (std::abs(z) < kSeriesThreshold) return delta;
  return std::expm1(z) / a;
}

// d/dz of phi(z) = expm1(z) / z, given exp(z) and phi(z).
double zoh_gain_slope(double z, double exp_z, double phi) {
  if (std::abs(z) < 1e-3) return 0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z / 30.0));
  return (exp_z - phi) / z;
}

double input_gain(double delta, double a, BbarMode mode) {
  return mode == BbarMode::kExact ? zoh_gain(delta, a) : delta;
}

void require_diagonal(const DiscreteSSM& ssm, const char* op) {
  if (!ssm.diagonal) throw ContractError(std::string(op) + ": scans require diagonal state storage");
}

std::vector<double> require_sequence(const Tensor& x, const char* op) {
  if (x.rank() != 1) throw DimensionError(std::string(op) + ": input must be [L], got " + shape_to_string(x.shape()));
  return x.to_vector();
}

}  // namespace

std::string to_string(ScanAlgorithm algo) {
  switch (algo) {
    case ScanAlgorithm::kSequential: return "sequential";
    case ScanAlgorithm::kParallel: return "parallel";
    case ScanAlgorithm::kConvolutional: return "convolutional";
  }
  return "?";
}

ScanAlgorithm parse_scan_algorithm(const std::string& name) {
  if (name == "sequential") return ScanAlgorithm::kSequential;
  if (name == "parallel") return ScanAlgorithm::kParallel;
  if (name == "convolutional") return ScanAlgorithm::kConvolutional;
  throw ConfigurationError("unknown scan algorithm '" + name + "'");
}

std::string to_string(BbarMode mode) { return mode == BbarMode::kExact ? "exact" : "euler"; }

BbarMode parse_bbar_mode(const std::string& name) {
  if (name == "exact") return BbarMode::kExact;
  if (name == "euler") return BbarMode::kEuler;
  throw ConfigurationError("unknown B-bar mode '" + name + "'");
}

std::size_t SSMParams::state_dim() const { return B.dim(0); }

void SSMParams::validate() const {
  if (!A.defined() || !B.defined() || !C.defined()) throw DimensionError("SSMParams: missing A, B or C");
  const std::size_t d = B.rank() == 2 ? B.dim(0) : 0;
  if (d < 1 || B.shape() != Shape{d, 1}) throw DimensionError("SSMParams: B must be [d,1] with d >= 1");
  if (C.shape() != Shape{1, d}) throw DimensionError("SSMParams: C must be [1,d]");
  if (diagonal ? A.shape() != Shape{d} : A.shape() != Shape{d, d}) {
    throw DimensionError("SSMParams: A has shape " + shape_to_string(A.shape()) + " for state dim " +
                         std::to_string(d));
  }
}

SSMParams SSMParams::make_diagonal(std::vector<double> a, std::vector<double> b, std::vector<double> c, double d) {
  const std::size_t na = a.size(), nb = b.size(), nc = c.size();
  SSMParams p{Tensor({na}, std::move(a)), Tensor({nb, 1}, std::move(b)), Tensor({1, nc}, std::move(c)), d, true};
  p.validate();
  return p;
}

DiscreteSSM discretize_zoh(const SSMParams& params, double delta, BbarMode mode) {
  params.validate();
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw DomainError("discretize_zoh: delta must be positive, got " + std::to_string(delta));
  }
  const std::size_t d = params.state_dim();
  auto a = params.A.data();
  auto b = params.B.data();
  DiscreteSSM out;
  out.C = params.C;
  out.D = params.D;
  out.delta = delta;
  out.diagonal = params.diagonal;

  if (params.diagonal) {
    std::vector<double> abar(d), bbar(d);
    for (std::size_t i = 0; i < d; ++i) {
      abar[i] = std::exp(delta * a[i]);
      bbar[i] = input_gain(delta, a[i], mode) * b[i];
    }
    out.A_bar = Tensor({d}, std::move(abar));
    out.B_bar = Tensor({d, 1}, std::move(bbar));
    return out;
  }

  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;
  const auto n = static_cast<Eigen::Index>(d);
  Mat dA(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) dA(i, j) = delta * a[static_cast<std::size_t>(i * n + j)];
  Vec dB(n);
  for (Eigen::Index i = 0; i < n; ++i) dB(i) = delta * b[static_cast<std::size_t>(i)];

  const Mat abar = dA.exp();
  Vec bbar;
  if (mode == BbarMode::kEuler || dA.norm() < kSeriesThreshold) {
    bbar = dB;
  } else {
    Eigen::FullPivLU<Mat> lu(dA);
    if (lu.isInvertible()) {
      bbar = lu.solve((abar - Mat::Identity(n, n)) * dB);
    } else {
      // sum_k (dA)^k / (k+1)! dB
      Vec term = dB;
      bbar = dB;
      for (int k = 1; k < 60; ++k) {
        term = dA * term / static_cast<double>(k + 1);
        bbar += term;
        if (term.norm() <= 1e-18 * bbar.norm()) break;
      }
    }
  }
  std::vector<double> abar_v(d * d), bbar_v(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    bbar_v[static_cast<std::size_t>(i)] = bbar(i);
    for (Eigen::Index j = 0; j < n; ++j) abar_v[static_cast<std::size_t>(i * n + j)] = abar(i, j);
  }
  out.A_bar = Tensor({d, d}, std::move(abar_v));
  out.B_bar = Tensor({d, 1}, std::move(bbar_v));
  return out;
}

void linear_recurrence_sequential(std::span<const double> a, std::span<const double> b, std::span<double> h) {
  double state = 0.0;
  for (std::size_t t = 0; t < h.size(); ++t) {
    state = a[t] * state + b[t];
    h[t] = state;
  }
}

void linear_recurrence_parallel(std::span<const double> a, std::span<const double> b, std::span<double> h) {
  const std::size_t len = h.size();
  if (len == 0) return;
  const std::size_t n = std::bit_ceil(len);
  // Interleaved (a, b) pairs in a reused buffer: the strided sweeps touch one cache line per node.
  struct Affine {
    double a, b;
  };
  thread_local std::vector<Affine> tree;
  tree.resize(n);
  for (std::size_t t = 0; t < len; ++t) tree[t] = {a[t], b[t]};
  std::fill(tree.begin() + static_cast<long>(len), tree.end(), Affine{1.0, 0.0});

  // Up-sweep: node i accumulates the composition of its subtree.
  for (std::size_t s = 1; s < n; s *= 2) {
    for (std::size_t i = 2 * s - 1; i < n; i += 2 * s) {
      const Affine& l = tree[i - s];
      Affine& r = tree[i];
      r.b = r.a * l.b + r.b;
      r.a *= l.a;
    }
  }
  // Down-sweep: node i receives the exclusive prefix of its subtree.
  tree[n - 1] = {1.0, 0.0};
  for (std::size_t s = n / 2; s >= 1; s /= 2) {
    for (std::size_t i = 2 * s - 1; i < n; i += 2 * s) {
      Affine& l = tree[i - s];
      Affine& r = tree[i];
      const Affine left = l;
      l = r;
      r = {left.a * l.a, left.a * l.b + left.b};
    }
  }
  // Exclusive prefix carries h[t-1] in its b component.
  for (std::size_t t = 0; t < len; ++t) h[t] = a[t] * tree[t].b + b[t];
}

namespace {

using Recurrence = void (*)(std::span<const double>, std::span<const double>, std::span<double>);

Tensor lti_scan(const DiscreteSSM& ssm, const Tensor& x, Recurrence recurrence, const char* op) {
  require_diagonal(ssm, op);
  const auto xs = require_sequence(x, op);
  const std::size_t len = xs.size(), d = ssm.state_dim();
  auto abar = ssm.A_bar.data(), bbar = ssm.B_bar.data(), c = ssm.C.data();
  std::vector<double> y(len);
  for (std::size_t t = 0; t < len; ++t) y[t] = ssm.D * xs[t];
  std::vector<double> a(len), b(len), h(len);
  for (std::size_t i = 0; i < d; ++i) {
    std::fill(a.begin(), a.end(), abar[i]);
    for (std::size_t t = 0; t < len; ++t) b[t] = bbar[i] * xs[t];
    recurrence(a, b, h);
    for (std::size_t t = 0; t < len; ++t) y[t] += c[i] * h[t];
  }
  return Tensor({len}, std::move(y));
}

}  // namespace

Tensor scan_sequential(const DiscreteSSM& ssm, const Tensor& x) {
  return lti_scan(ssm, x, &linear_recurrence_sequential, "scan_sequential");
}

Tensor scan_parallel(const DiscreteSSM& ssm, const Tensor& x) {
  return lti_scan(ssm, x, &linear_recurrence_parallel, "scan_parallel");
}

std::vector<double> convolution_kernel(const DiscreteSSM& ssm, std::size_t length) {
  require_diagonal(ssm, "convolution_kernel");
  const std::size_t d = ssm.state_dim();
  auto abar = ssm.A_bar.data(), bbar = ssm.B_bar.data(), c = ssm.C.data();
  std::vector<double> kernel(length, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double power = c[i] * bbar[i];
    for (std::size_t k = 0; k < length; ++k) {
      kernel[k] += power;
      power *= abar[i];
    }
  }
  return kernel;
}

Tensor scan_convolutional(const DiscreteSSM& ssm, const Tensor& x) {
  const auto xs = require_sequence(x, "scan_convolutional");
  const std::size_t len = xs.size();
  const auto kernel = convolution_kernel(ssm, len);
  std::vector<double> y(len);
  for (std::size_t t = 0; t < len; ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= t; ++j) acc += kernel[t - j] * xs[j];
    y[t] = acc + ssm.D * xs[t];
  }
  return Tensor({len}, std::move(y));
}

Tensor scan(const DiscreteSSM& ssm, const Tensor& x, ScanAlgorithm algo) {
  switch (algo) {
    case ScanAlgorithm::kSequential: return scan_sequential(ssm, x);
    case ScanAlgorithm::kParallel: return scan_parallel(ssm, x);
    case ScanAlgorithm::kConvolutional: return scan_convolutional(ssm, x);
  }
  throw ContractError("scan: unknown algorithm");
}

double default_delta_bias() { return std::log(std::expm1(0.01)); }

SelectiveHead SelectiveHead::init(std::size_t features, std::size_t state_dim, Rng& rng) {
  SelectiveHead head;
  head.w_B = fan_in_param({features, state_dim}, features, rng);
  head.w_C = fan_in_param({features, state_dim}, features, rng);
  head.w_delta = fan_in_param({features, 1}, features, rng);
  head.b_delta = constant_param({1}, default_delta_bias());
  return head;
}

void SelectiveHead::for_each_param(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "w_B", w_B);
  visit(prefix + "w_C", w_C);
  visit(prefix + "w_delta", w_delta);
  visit(prefix + "b_delta", b_delta);
}

SelectiveParams selective_parameterize(const Tensor& x, const SelectiveHead& head) {
  if (x.rank() != 2) throw DimensionError("selective_parameterize: x must be [L, C], got " + shape_to_string(x.shape()));
  SelectiveParams out;
  out.B = matmul(x, head.w_B);
  out.C = matmul(x, head.w_C);
  out.delta = softplus(add_trailing(matmul(x, head.w_delta), head.b_delta)).reshape({x.dim(0)});
  return out;
}

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C,
                      const Tensor& D, ScanAlgorithm algo, BbarMode mode) {
  if (algo == ScanAlgorithm::kConvolutional) {
    throw ContractError("selective_scan: convolutional evaluation is LTI only");
  }
  if (x.rank() != 2 || A.rank() != 2) throw DimensionError("selective_scan: x and A must be rank 2");
  const std::size_t len = x.dim(0), ch = x.dim(1), d = A.dim(1);
  if (A.dim(0) != ch || delta.shape() != Shape{len} || B.shape() != Shape{len, d} || C.shape() != Shape{len, d} ||
      D.shape() != Shape{ch}) {
    throw DimensionError("selective_scan: inconsistent shapes x" + shape_to_string(x.shape()) + " delta" +
                         shape_to_string(delta.shape()) + " A" + shape_to_string(A.shape()) + " B" +
                         shape_to_string(B.shape()) + " C" + shape_to_string(C.shape()) + " D" +
                         shape_to_string(D.shape()));
  }
  auto xv = x.data(), dv = delta.data(), av = A.data(), bv = B.data(), cv = C.data(), Dv = D.data();
  for (double v : dv) {
    if (!(v > 0.0)) throw DomainError("selective_scan: delta must be positive");
  }
  const Recurrence recurrence =
      algo == ScanAlgorithm::kSequential ? &linear_recurrence_sequential : &linear_recurrence_parallel;

  // Per-sequence buffers laid out [c][i][t]; x and y are transposed to [c][t].
  const std::size_t nseq = ch * d;
  auto states = std::make_shared<std::vector<double>>(nseq * len);
  auto decays = std::make_shared<std::vector<double>>(nseq * len);
  auto gains = std::make_shared<std::vector<double>>(nseq * len);
  auto xt = std::make_shared<std::vector<double>>(ch * len);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) (*xt)[c * len + t] = xv[t * ch + c];
  std::vector<double> yt(ch * len);
  std::vector<double> seq_b(len);
  for (std::size_t c = 0; c < ch; ++c) {
    const double* xc = xt->data() + c * len;
    double* yc = yt.data() + c * len;
    for (std::size_t t = 0; t < len; ++t) yc[t] = Dv[c] * xc[t];
    for (std::size_t i = 0; i < d; ++i) {
      const double a = av[c * d + i];
      double* seq_a = decays->data() + (c * d + i) * len;
      double* seq_g = gains->data() + (c * d + i) * len;
      double* seq_h = states->data() + (c * d + i) * len;
      for (std::size_t t = 0; t < len; ++t) {
        const double z = dv[t] * a;
        if (mode == BbarMode::kExact) {
          const double em = std::expm1(z);
          seq_a[t] = em + 1.0;
          seq_g[t] = std::abs(z) < kSeriesThreshold ? dv[t] : em / a;
        } else {
          seq_a[t] = std::exp(z);
          seq_g[t] = dv[t];
        }
        seq_b[t] = seq_g[t] * bv[t * d + i] * xc[t];
      }
      recurrence({seq_a, len}, seq_b, {seq_h, len});
      for (std::size_t t = 0; t < len; ++t) yc[t] += cv[t * d + i] * seq_h[t];
    }
  }
  std::vector<double> y(len * ch);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) y[t * ch + c] = yt[c * len + t];

  auto dd = delta.detach(), ad = A.detach(), bd = B.detach(), cd = C.detach(), Dd = D.detach();
  return detail::make_result(
      {len, ch}, std::move(y), {x, delta, A, B, C, D},
      [=](std::span<const double> gy, detail::GradRefs in) {
        auto dv = dd.data(), av = ad.data(), bv = bd.data(), cv = cd.data(), Dv = Dd.data();
        double *gx = in[0], *gdelta = in[1], *gA = in[2], *gB = in[3], *gC = in[4], *gD = in[5];
        std::vector<double> gyt(ch * len), gxt(gx ? ch * len : 0, 0.0);
        for (std::size_t t = 0; t < len; ++t)
          for (std::size_t c = 0; c < ch; ++c) gyt[c * len + t] = gy[t * ch + c];
        for (std::size_t c = 0; c < ch; ++c) {
          const double* xc = xt->data() + c * len;
          const double* gc = gyt.data() + c * len;
          double* gxc = gx ? gxt.data() + c * len : nullptr;
          if (gxc)
            for (std::size_t t = 0; t < len; ++t) gxc[t] += Dv[c] * gc[t];
          if (gD)
            for (std::size_t t = 0; t < len; ++t) gD[c] += gc[t] * xc[t];
          for (std::size_t i = 0; i < d; ++i) {
            const double a = av[c * d + i];
            const double* hs = states->data() + (c * d + i) * len;
            const double* decay_s = decays->data() + (c * d + i) * len;
            const double* gain_s = gains->data() + (c * d + i) * len;
            double gh = 0.0;
            double next_decay = 0.0;
            double ga_total = 0.0;
            for (std::size_t t = len; t-- > 0;) {
              const double g = gc[t];
              const double h_prev = t ? hs[t - 1] : 0.0;
              const double decay = decay_s[t];
              const double gain = gain_s[t];
              const double dt = dv[t];
              const double bt = bv[t * d + i];
              gh = cv[t * d + i] * g + next_decay * gh;
              next_decay = decay;
              if (gC) gC[t * d + i] += g * hs[t];
              if (gxc) gxc[t] += gh * gain * bt;

              const double g_decay = gh * h_prev;
              const double g_u = gh * xc[t];  // w.r.t. gain * B
              if (gB) gB[t * d + i] += g_u * gain;
              double g_dt = g_decay * decay * a;
              double g_a = g_decay * decay * dt;
              if (mode == BbarMode::kExact) {
                // d gain / d delta = exp(z); d gain / d a = delta^2 phi'(z), phi(z) = gain / delta.
                g_dt += g_u * bt * decay;
                g_a += g_u * bt * dt * dt * zoh_gain_slope(dt * a, decay, gain / dt);
              } else {
                g_dt += g_u * bt;
              }
              if (gdelta) gdelta[t] += g_dt;
              ga_total += g_a;
            }
            if (gA) gA[c * d + i] += ga_total;
          }
        }
        if (gx)
          for (std::size_t t = 0; t < len; ++t)
            for (std::size_t c = 0; c < ch; ++c) gx[t * ch + c] += gxt[c * len + t];
      });
}

namespace {

Tensor single_channel_selective(const SelectiveParams& sel, const SSMParams& base, const Tensor& x,
                                ScanAlgorithm algo, BbarMode mode, const char* op) {
  base.validate();
  if (!base.diagonal) throw ContractError(std::string(op) + ": selective scans require diagonal A");
  if (x.rank() != 1 || x.dim(0) != sel.length()) {
    throw DimensionError(std::string(op) + ": x must be [L] matching the selective parameters");
  }
  const std::size_t len = x.dim(0), d = base.state_dim();
  auto y = selective_scan(x.reshape({len, 1}), sel.delta, base.A.reshape({1, d}), sel.B, sel.C,
                          Tensor({1}, {base.D}), algo, mode);
  return y.reshape({len});
}

}  // namespace

Tensor scan_sequential(const SelectiveParams& sel, const SSMParams& base, const Tensor& x, BbarMode mode) {
  return single_channel_selective(sel, base, x, ScanAlgorithm::kSequential, mode, "scan_sequential");
}

Tensor scan_parallel(const SelectiveParams& sel, const SSMParams& base, const Tensor& x, BbarMode mode) {
  return single_channel_selective(sel, base, x, ScanAlgorithm::kParallel, mode, "scan_parallel");
}

Tensor scan_convolutional(const SelectiveParams&, const SSMParams&, const Tensor&) {
  throw ContractError("scan_convolutional: LTI only; selective parameters vary per step");
}

Tensor init_a_log(std::size_t rows, std::size_t state_dim, Rng& rng) {
  std::uniform_real_distribution<double> dist(std::log(0.5), std::log(8.0));
  std::vector<double> values(rows * state_dim);
  for (auto& v : values) v = dist(rng);
  return Tensor({rows, state_dim}, std::move(values), true);
}

}  // namespace vmamba
