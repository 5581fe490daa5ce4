// Test-only oracles: finite differences over the flattened weights, a
// second forward-pass implementation, and a quadratic-time AUC. These stay
// independent of the library code paths they are used to check.
#ifndef MIDAM_TESTS_ORACLES_HPP
#define MIDAM_TESTS_ORACLES_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "midam/model.hpp"

namespace midam::testing {

inline std::vector<double> flatten_weights(const ModelParams& p) {
  std::vector<double> flat;
  flat.reserve(p.n_weights());
  flat.insert(flat.end(), p.W1.begin(), p.W1.end());
  flat.insert(flat.end(), p.b1.begin(), p.b1.end());
  flat.insert(flat.end(), p.w_c.begin(), p.w_c.end());
  flat.push_back(p.c0);
  flat.insert(flat.end(), p.V.begin(), p.V.end());
  flat.insert(flat.end(), p.w_a.begin(), p.w_a.end());
  return flat;
}

inline void unflatten_weights(const std::vector<double>& flat,
                              ModelParams& p) {
  std::size_t k = 0;
  for (double& v : p.W1) v = flat[k++];
  for (double& v : p.b1) v = flat[k++];
  for (double& v : p.w_c) v = flat[k++];
  p.c0 = flat[k++];
  for (double& v : p.V) v = flat[k++];
  for (double& v : p.w_a) v = flat[k++];
}

inline std::vector<double> flatten_grad(const ParamGrad& g) {
  std::vector<double> flat;
  flat.insert(flat.end(), g.W1.begin(), g.W1.end());
  flat.insert(flat.end(), g.b1.begin(), g.b1.end());
  flat.insert(flat.end(), g.w_c.begin(), g.w_c.end());
  flat.push_back(g.c0);
  flat.insert(flat.end(), g.V.begin(), g.V.end());
  flat.insert(flat.end(), g.w_a.begin(), g.w_a.end());
  return flat;
}

// Central finite differences of fn over every network weight.
inline std::vector<double> fd_weight_gradient(
    const ModelParams& p, const std::function<double(const ModelParams&)>& fn,
    double step = 1e-5) {
  std::vector<double> flat = flatten_weights(p);
  std::vector<double> grad(flat.size());
  ModelParams probe = p;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + step;
    unflatten_weights(flat, probe);
    const double up = fn(probe);
    flat[i] = saved - step;
    unflatten_weights(flat, probe);
    const double down = fn(probe);
    flat[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  unflatten_weights(flat, probe);
  return grad;
}

// max over coordinates of |analytic - fd| / max(|fd|, floor)
inline double max_rel_error(const std::vector<double>& analytic,
                            const std::vector<double>& fd,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::fabs(fd[i]), floor);
    worst = std::max(worst, std::fabs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

// Second implementation of the instance forward pass, written against the
// defining formulas with its own loop structure.
struct IndependentForward {
  double phi = 0.0;
  double g_logit = 0.0;
  double delta = 0.0;
};

inline IndependentForward independent_forward(const ModelParams& p,
                                              const Instance& x) {
  const std::size_t d = p.d;
  std::vector<double> pre(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < d; ++i) {
      pre[i] += p.W1[i * d + j] * x.features[j];  // column-by-column
    }
  }
  std::vector<double> hid(d);
  for (std::size_t i = 0; i < d; ++i) hid[i] = std::tanh(pre[i] + p.b1[i]);

  IndependentForward out;
  out.delta = p.c0;
  for (std::size_t i = 0; i < d; ++i) out.delta += hid[i] * p.w_c[i];
  out.phi = 1.0 / (1.0 + std::exp(-out.delta));
  for (std::size_t i = 0; i < p.m; ++i) {
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += p.V[i * d + j] * hid[j];
    out.g_logit += p.w_a[i] * std::tanh(t);
  }
  return out;
}

// O(P*N) pair counting with the 0.5 tie convention.
inline double brute_force_auc(const std::vector<double>& pos,
                              const std::vector<double>& neg) {
  double wins = 0.0;
  for (double sp : pos) {
    for (double sn : neg) {
      if (sp > sn) {
        wins += 1.0;
      } else if (sp == sn) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(pos.size()) *
                 static_cast<double>(neg.size()));
}

}  // namespace midam::testing

#endif
