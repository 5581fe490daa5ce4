#ifndef MIDAM_MODEL_HPP
#define MIDAM_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "midam/data.hpp"

namespace midam {

// Attention logits are clamped to this magnitude before exponentiation;
// at the clamp boundary the gradient through the logit is zero.
inline constexpr double kAttLogitClamp = 30.0;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double clamped_exp_logit(double g) {
  if (g > kAttLogitClamp) g = kAttLogitClamp;
  if (g < -kAttLogitClamp) g = -kAttLogitClamp;
  return std::exp(g);
}

// One tanh hidden layer of width d, a sigmoid score head, and a tanh
// attention branch of width m, plus the min-max objective scalars.
//
//   hidden  = tanh(W1 x + b1)
//   delta   = w_c . hidden + c0         (unnormalized score)
//   phi     = sigmoid(delta)            (instance score in (0,1))
//   g_logit = w_a . tanh(V hidden)      (attention logit)
struct ModelParams {
  std::size_t d = 0;  // input and hidden width
  std::size_t m = 0;  // attention width
  std::vector<double> W1;   // d x d, row-major
  std::vector<double> b1;   // d
  std::vector<double> w_c;  // d
  double c0 = 0.0;
  std::vector<double> V;    // m x d, row-major
  std::vector<double> w_a;  // m
  double a = 0.0;
  double b = 0.0;
  double alpha = 0.0;

  std::size_t n_weights() const { return d * d + d + d + 1 + m * d + m; }
};

struct InstanceForward {
  std::vector<double> hidden;
  double phi = 0.0;
  double g_logit = 0.0;
  double delta = 0.0;
};

// Gradient with respect to the network weights (not a, b, alpha).
struct ParamGrad {
  std::size_t d = 0;
  std::size_t m = 0;
  std::vector<double> W1;
  std::vector<double> b1;
  std::vector<double> w_c;
  double c0 = 0.0;
  std::vector<double> V;
  std::vector<double> w_a;

  static ParamGrad zeros(std::size_t d, std::size_t m);
  static ParamGrad zeros_like(const ModelParams& p) { return zeros(p.d, p.m); }

  void set_zero();
  void axpy(double coeff, const ParamGrad& other);  // this += coeff * other
  void scale(double coeff);
  double max_abs() const;
  bool all_finite() const;
};

// Uniform init in [-scale*sqrt(1/d), scale*sqrt(1/d)] for every weight;
// a, b, alpha start at zero.
ModelParams init_params(std::size_t d, std::size_t m, std::uint64_t seed,
                        double scale);

InstanceForward forward(const ModelParams& p, const Instance& x);

// Accumulates upstream * d(phi)/d(weights) into acc. The attention
// branch does not feed phi, so V and w_a receive nothing.
void accumulate_phi_grad(const ModelParams& p, const Instance& x,
                         const InstanceForward& fwd, double upstream,
                         ParamGrad& acc);

// Accumulates up_num * d(exp(g)*delta)/d(weights) +
// up_den * d(exp(g))/d(weights) into acc, with g clamped as in
// clamped_exp_logit.
void accumulate_att_pair_grad(const ModelParams& p, const Instance& x,
                              const InstanceForward& fwd, double up_num,
                              double up_den, ParamGrad& acc);

// Allocating wrappers.
ParamGrad backward_phi(const ModelParams& p, const Instance& x,
                       double upstream);
ParamGrad backward_att_pair(const ModelParams& p, const Instance& x,
                            double up_num, double up_den);

}  // namespace midam

#endif
