#include "midam/model.hpp"

#include <cmath>
#include <stdexcept>

namespace midam {

namespace {

// four independent accumulator chains; summation order is fixed, so the
// result is deterministic for a given n
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

}  // namespace

ParamGrad ParamGrad::zeros(std::size_t d, std::size_t m) {
  ParamGrad g;
  g.d = d;
  g.m = m;
  g.W1.assign(d * d, 0.0);
  g.b1.assign(d, 0.0);
  g.w_c.assign(d, 0.0);
  g.c0 = 0.0;
  g.V.assign(m * d, 0.0);
  g.w_a.assign(m, 0.0);
  return g;
}

void ParamGrad::set_zero() {
  std::fill(W1.begin(), W1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w_c.begin(), w_c.end(), 0.0);
  c0 = 0.0;
  std::fill(V.begin(), V.end(), 0.0);
  std::fill(w_a.begin(), w_a.end(), 0.0);
}

void ParamGrad::axpy(double coeff, const ParamGrad& other) {
  for (std::size_t i = 0; i < W1.size(); ++i) W1[i] += coeff * other.W1[i];
  for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += coeff * other.b1[i];
  for (std::size_t i = 0; i < w_c.size(); ++i) w_c[i] += coeff * other.w_c[i];
  c0 += coeff * other.c0;
  for (std::size_t i = 0; i < V.size(); ++i) V[i] += coeff * other.V[i];
  for (std::size_t i = 0; i < w_a.size(); ++i) w_a[i] += coeff * other.w_a[i];
}

void ParamGrad::scale(double coeff) {
  for (double& v : W1) v *= coeff;
  for (double& v : b1) v *= coeff;
  for (double& v : w_c) v *= coeff;
  c0 *= coeff;
  for (double& v : V) v *= coeff;
  for (double& v : w_a) v *= coeff;
}

double ParamGrad::max_abs() const {
  double m_abs = std::fabs(c0);
  for (double v : W1) m_abs = std::max(m_abs, std::fabs(v));
  for (double v : b1) m_abs = std::max(m_abs, std::fabs(v));
  for (double v : w_c) m_abs = std::max(m_abs, std::fabs(v));
  for (double v : V) m_abs = std::max(m_abs, std::fabs(v));
  for (double v : w_a) m_abs = std::max(m_abs, std::fabs(v));
  return m_abs;
}

bool ParamGrad::all_finite() const {
  if (!std::isfinite(c0)) return false;
  for (double v : W1)
    if (!std::isfinite(v)) return false;
  for (double v : b1)
    if (!std::isfinite(v)) return false;
  for (double v : w_c)
    if (!std::isfinite(v)) return false;
  for (double v : V)
    if (!std::isfinite(v)) return false;
  for (double v : w_a)
    if (!std::isfinite(v)) return false;
  return true;
}

ModelParams init_params(std::size_t d, std::size_t m, std::uint64_t seed,
                        double scale) {
  if (d < 1 || m < 1) throw std::invalid_argument("d and m must be >= 1");
  ModelParams p;
  p.d = d;
  p.m = m;
  const double bound = scale * std::sqrt(1.0 / static_cast<double>(d));
  Rng rng(mix_seed(seed, 0x30DE1ULL));
  auto draw = [&] { return rng.uniform(-bound, bound); };
  p.W1.resize(d * d);
  for (double& v : p.W1) v = draw();
  p.b1.resize(d);
  for (double& v : p.b1) v = draw();
  p.w_c.resize(d);
  for (double& v : p.w_c) v = draw();
  p.c0 = draw();
  p.V.resize(m * d);
  for (double& v : p.V) v = draw();
  p.w_a.resize(m);
  for (double& v : p.w_a) v = draw();
  p.a = 0.0;
  p.b = 0.0;
  p.alpha = 0.0;
  return p;
}

InstanceForward forward(const ModelParams& p, const Instance& x) {
  if (x.features.size() != p.d) {
    throw std::invalid_argument("instance dimension " +
                                std::to_string(x.features.size()) +
                                " does not match model d=" +
                                std::to_string(p.d));
  }
  InstanceForward f;
  f.hidden.resize(p.d);
  const double* feat = x.features.data();
  for (std::size_t i = 0; i < p.d; ++i) {
    f.hidden[i] = std::tanh(p.b1[i] + dot(&p.W1[i * p.d], feat, p.d));
  }
  f.delta = p.c0 + dot(p.w_c.data(), f.hidden.data(), p.d);
  f.phi = sigmoid(f.delta);
  double g = 0.0;
  for (std::size_t i = 0; i < p.m; ++i) {
    g += p.w_a[i] * std::tanh(dot(&p.V[i * p.d], f.hidden.data(), p.d));
  }
  f.g_logit = g;
  return f;
}

namespace {

// dz = dhidden * (1 - hidden^2) folded into W1, b1 accumulation
void backprop_hidden(const ModelParams& p, const Instance& x,
                     const InstanceForward& fwd,
                     const std::vector<double>& dhidden, ParamGrad& acc) {
  for (std::size_t i = 0; i < p.d; ++i) {
    const double h = fwd.hidden[i];
    const double dz = dhidden[i] * (1.0 - h * h);
    if (dz == 0.0) continue;
    acc.b1[i] += dz;
    double* row = &acc.W1[i * p.d];
    for (std::size_t j = 0; j < p.d; ++j) row[j] += dz * x.features[j];
  }
}

}  // namespace

void accumulate_phi_grad(const ModelParams& p, const Instance& x,
                         const InstanceForward& fwd, double upstream,
                         ParamGrad& acc) {
  if (!std::isfinite(upstream)) {
    throw std::runtime_error("non-finite upstream in phi backward");
  }
  if (upstream == 0.0) return;
  const double dd = upstream * fwd.phi * (1.0 - fwd.phi);  // d phi / d delta
  acc.c0 += dd;
  std::vector<double> dhidden(p.d);
  for (std::size_t i = 0; i < p.d; ++i) {
    acc.w_c[i] += dd * fwd.hidden[i];
    dhidden[i] = dd * p.w_c[i];
  }
  backprop_hidden(p, x, fwd, dhidden, acc);
}

void accumulate_att_pair_grad(const ModelParams& p, const Instance& x,
                              const InstanceForward& fwd, double up_num,
                              double up_den, ParamGrad& acc) {
  if (!std::isfinite(up_num) || !std::isfinite(up_den)) {
    throw std::runtime_error("non-finite upstream in attention backward");
  }
  if (up_num == 0.0 && up_den == 0.0) return;
  const double eg = clamped_exp_logit(fwd.g_logit);
  const bool interior = std::fabs(fwd.g_logit) < kAttLogitClamp;

  // exp(g)*delta depends on g and delta; exp(g) on g alone
  const double coef_g = interior ? (up_num * fwd.delta + up_den) * eg : 0.0;
  const double coef_delta = up_num * eg;

  std::vector<double> dhidden(p.d, 0.0);

  if (coef_delta != 0.0) {
    acc.c0 += coef_delta;
    for (std::size_t i = 0; i < p.d; ++i) {
      acc.w_c[i] += coef_delta * fwd.hidden[i];
      dhidden[i] += coef_delta * p.w_c[i];
    }
  }

  if (coef_g != 0.0) {
    for (std::size_t i = 0; i < p.m; ++i) {
      const double* vrow = &p.V[i * p.d];
      const double r = std::tanh(dot(vrow, fwd.hidden.data(), p.d));
      acc.w_a[i] += coef_g * r;
      const double dt = coef_g * p.w_a[i] * (1.0 - r * r);
      if (dt == 0.0) continue;
      double* grow = &acc.V[i * p.d];
      for (std::size_t j = 0; j < p.d; ++j) {
        grow[j] += dt * fwd.hidden[j];
        dhidden[j] += dt * vrow[j];
      }
    }
  }

  backprop_hidden(p, x, fwd, dhidden, acc);
}

ParamGrad backward_phi(const ModelParams& p, const Instance& x,
                       double upstream) {
  ParamGrad g = ParamGrad::zeros_like(p);
  accumulate_phi_grad(p, x, forward(p, x), upstream, g);
  return g;
}

ParamGrad backward_att_pair(const ModelParams& p, const Instance& x,
                            double up_num, double up_den) {
  ParamGrad g = ParamGrad::zeros_like(p);
  accumulate_att_pair_grad(p, x, forward(p, x), up_num, up_den, g);
  return g;
}

}  // namespace midam
