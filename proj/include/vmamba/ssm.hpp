#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vmamba/module.hpp"
#include "vmamba/tensor.hpp"

namespace vmamba {

// How the discrete input matrix is formed from (delta, A, B).
enum class BbarMode {
  kExact,  // (dA)^-1 (exp(dA) - I) dB
  kEuler,  // dB
};

enum class ScanAlgorithm { kSequential, kParallel, kConvolutional };

std::string to_string(ScanAlgorithm algo);
ScanAlgorithm parse_scan_algorithm(const std::string& name);
std::string to_string(BbarMode mode);
BbarMode parse_bbar_mode(const std::string& name);

/// Continuous single-input single-output state-space system
///   h'(t) = A h(t) + B x(t),  y(t) = C h(t) + D x(t).
/// A is stored as its diagonal [d] when `diagonal`, otherwise dense [d, d].
struct SSMParams {
  Tensor A;
  Tensor B;  // [d, 1]
  Tensor C;  // [1, d]
  double D = 0.0;
  bool diagonal = true;

  std::size_t state_dim() const;
  void validate() const;

  static SSMParams make_diagonal(std::vector<double> a, std::vector<double> b, std::vector<double> c, double d);
};

struct DiscreteSSM {
  Tensor A_bar;  // same storage as SSMParams::A
  Tensor B_bar;  // [d, 1]
  Tensor C;      // [1, d]
  double D = 0.0;
  double delta = 0.0;
  bool diagonal = true;

  std::size_t state_dim() const { return B_bar.dim(0); }
};

/// Zero-order-hold discretization. Throws DomainError for delta <= 0.
/// When |delta*A| < 1e-8 the series limit delta*B is used for B_bar; a
/// singular dense A falls back to the truncated power series.
DiscreteSSM discretize_zoh(const SSMParams& params, double delta, BbarMode mode = BbarMode::kExact);

// Time-invariant scans of a single-channel sequence x[L], zero initial state.
// Diagonal systems only.
Tensor scan_sequential(const DiscreteSSM& ssm, const Tensor& x);
Tensor scan_parallel(const DiscreteSSM& ssm, const Tensor& x);
Tensor scan_convolutional(const DiscreteSSM& ssm, const Tensor& x);
Tensor scan(const DiscreteSSM& ssm, const Tensor& x, ScanAlgorithm algo);

// K_k = C A_bar^k B_bar for k < length.
std::vector<double> convolution_kernel(const DiscreteSSM& ssm, std::size_t length);

// h[t] = a[t] * h[t-1] + b[t] with h[-1] = 0.
void linear_recurrence_sequential(std::span<const double> a, std::span<const double> b, std::span<double> h);
// Same recurrence by a work-efficient up-sweep/down-sweep prefix scan over the
// associative pair composition (a1,b1) then (a2,b2) = (a2*a1, a2*b1 + b2).
// Any length; the tree is padded to a power of two with the identity (1, 0).
void linear_recurrence_parallel(std::span<const double> a, std::span<const double> b, std::span<double> h);

// Input-dependent projections producing per-step B_t, C_t and delta_t.
struct SelectiveHead {
  Tensor w_B;      // [C_feat, d]
  Tensor w_C;      // [C_feat, d]
  Tensor w_delta;  // [C_feat, 1]
  Tensor b_delta;  // [1]

  static SelectiveHead init(std::size_t features, std::size_t state_dim, Rng& rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& visit);
};

struct SelectiveParams {
  Tensor B;      // [L, d]
  Tensor C;      // [L, d]
  Tensor delta;  // [L], strictly positive

  std::size_t length() const { return delta.dim(0); }
};

// softplus(b) == 0.01
double default_delta_bias();

/// B_t = x_t w_B, C_t = x_t w_C, delta_t = softplus(x_t w_delta + b_delta). x is [L, C_feat].
SelectiveParams selective_parameterize(const Tensor& x, const SelectiveHead& head);

/// Multi-channel selective scan. Each channel c owns an independent d-state
/// recurrence sharing B_t, C_t, delta_t:
///   h_t = exp(delta_t A_c) h_{t-1} + Bbar(delta_t, A_c, B_t) x_tc
///   y_tc = C_t . h_t + D_c x_tc
/// x [L, Ch], delta [L], A [Ch, d] (diagonal entries), B, C [L, d], D [Ch].
/// Differentiable in every input. kConvolutional is rejected (LTI only).
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C,
                      const Tensor& D, ScanAlgorithm algo = ScanAlgorithm::kParallel,
                      BbarMode mode = BbarMode::kExact);

// Single-channel convenience forms: A and D come from a diagonal `base`.
Tensor scan_sequential(const SelectiveParams& sel, const SSMParams& base, const Tensor& x,
                       BbarMode mode = BbarMode::kExact);
Tensor scan_parallel(const SelectiveParams& sel, const SSMParams& base, const Tensor& x,
                     BbarMode mode = BbarMode::kExact);
// Always throws ContractError: convolution needs time-invariant parameters.
Tensor scan_convolutional(const SelectiveParams& sel, const SSMParams& base, const Tensor& x);

// a_i = -exp(u_i), u_i ~ U[log 0.5, log 8]; returns the log-magnitudes u [rows, d].
Tensor init_a_log(std::size_t rows, std::size_t state_dim, Rng& rng);

}  // namespace vmamba
