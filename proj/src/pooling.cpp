#include "midam/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace midam {

PoolKind parse_pool_kind(const std::string& name, double tau) {
  PoolKind kind;
  kind.tau = tau;
  if (name == "mean") {
    kind.method = PoolMethod::mean;
  } else if (name == "max") {
    kind.method = PoolMethod::max;
  } else if (name == "smx" || name == "smoothed_max") {
    kind.method = PoolMethod::smoothed_max;
  } else if (name == "att" || name == "attention") {
    kind.method = PoolMethod::attention;
  } else {
    throw std::invalid_argument("unknown pooling '" + name + "'");
  }
  if (kind.method == PoolMethod::smoothed_max && !(tau > 0.0)) {
    throw std::invalid_argument("smoothed_max requires tau > 0");
  }
  return kind;
}

std::string pool_kind_name(const PoolKind& kind) {
  switch (kind.method) {
    case PoolMethod::mean:
      return "mean";
    case PoolMethod::max:
      return "max";
    case PoolMethod::smoothed_max:
      return "smx";
    case PoolMethod::attention:
      return "att";
  }
  return "?";
}

double inner_sq_dist(const InnerValue& u, const InnerValue& v,
                     const PoolKind& kind) {
  const double d1 = u.s1 - v.s1;
  if (kind.method != PoolMethod::attention) return d1 * d1;
  const double d2 = u.s2 - v.s2;
  return d1 * d1 + d2 * d2;
}

namespace {

std::vector<std::size_t> sorted_subset(std::span<const std::size_t> subset,
                                       const Bag& bag) {
  if (subset.empty()) {
    throw std::invalid_argument("pooling over an empty instance subset");
  }
  std::vector<std::size_t> idx(subset.begin(), subset.end());
  std::sort(idx.begin(), idx.end());
  if (idx.back() >= bag.size()) {
    throw std::out_of_range("instance index " + std::to_string(idx.back()) +
                            " out of range for bag of size " +
                            std::to_string(bag.size()));
  }
  return idx;
}

}  // namespace

InnerValue inner_f1(const ModelParams& p, const Bag& bag,
                    std::span<const std::size_t> subset,
                    const PoolKind& kind) {
  const auto idx = sorted_subset(subset, bag);
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  InnerValue s;
  switch (kind.method) {
    case PoolMethod::mean: {
      for (std::size_t j : idx) s.s1 += forward(p, bag.instances[j]).phi;
      s.s1 *= inv_n;
      break;
    }
    case PoolMethod::max: {
      double best = -1.0;
      for (std::size_t j : idx) {
        best = std::max(best, forward(p, bag.instances[j]).phi);
      }
      s.s1 = best;
      break;
    }
    case PoolMethod::smoothed_max: {
      for (std::size_t j : idx) {
        s.s1 += std::exp(forward(p, bag.instances[j]).phi / kind.tau);
      }
      s.s1 *= inv_n;
      break;
    }
    case PoolMethod::attention: {
      for (std::size_t j : idx) {
        const InstanceForward f = forward(p, bag.instances[j]);
        const double eg = clamped_exp_logit(f.g_logit);
        s.s1 += eg * f.delta;
        s.s2 += eg;
      }
      s.s1 *= inv_n;
      s.s2 *= inv_n;
      break;
    }
  }
  return s;
}

double outer_f2(const InnerValue& s, const PoolKind& kind) {
  switch (kind.method) {
    case PoolMethod::mean:
    case PoolMethod::max:
      return s.s1;
    case PoolMethod::smoothed_max:
      if (!(s.s1 > 0.0)) {
        throw std::runtime_error(
            "smoothed_max inner value must be positive, got " +
            std::to_string(s.s1));
      }
      return kind.tau * std::log(s.s1);
    case PoolMethod::attention: {
      if (!(s.s2 > 0.0)) {
        throw std::runtime_error(
            "attention denominator must be positive, got " +
            std::to_string(s.s2));
      }
      const double den = std::max(s.s2, kAttDenFloor);
      return sigmoid(s.s1 / den);
    }
  }
  throw std::logic_error("unreachable pooling kind");
}

double pool(const ModelParams& p, const Bag& bag,
            std::span<const std::size_t> subset, const PoolKind& kind) {
  return outer_f2(inner_f1(p, bag, subset, kind), kind);
}

void pool_vjp(const ModelParams& p, const Bag& bag,
              std::span<const std::size_t> subset, const PoolKind& kind,
              const InnerValue& s_eval, double upstream, ParamGrad& acc) {
  const auto idx = sorted_subset(subset, bag);
  if (upstream == 0.0) return;
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  switch (kind.method) {
    case PoolMethod::mean: {
      for (std::size_t j : idx) {
        const InstanceForward f = forward(p, bag.instances[j]);
        accumulate_phi_grad(p, bag.instances[j], f, upstream * inv_n, acc);
      }
      break;
    }
    case PoolMethod::max: {
      // subgradient attributed to the lowest-index argmax
      std::size_t best_j = idx[0];
      double best_phi = -1.0;
      for (std::size_t j : idx) {
        const double phi = forward(p, bag.instances[j]).phi;
        if (phi > best_phi) {
          best_phi = phi;
          best_j = j;
        }
      }
      const InstanceForward f = forward(p, bag.instances[best_j]);
      accumulate_phi_grad(p, bag.instances[best_j], f, upstream, acc);
      break;
    }
    case PoolMethod::smoothed_max: {
      if (!(s_eval.s1 > 0.0)) {
        throw std::runtime_error(
            "smoothed_max inner value must be positive, got " +
            std::to_string(s_eval.s1));
      }
      // grad_f2 = tau / s; grad_f1 = mean of exp(phi/tau)/tau * grad phi
      const double coeff = upstream * inv_n / s_eval.s1;
      for (std::size_t j : idx) {
        const InstanceForward f = forward(p, bag.instances[j]);
        accumulate_phi_grad(p, bag.instances[j], f,
                            coeff * std::exp(f.phi / kind.tau), acc);
      }
      break;
    }
    case PoolMethod::attention: {
      if (!(s_eval.s2 > 0.0)) {
        throw std::runtime_error(
            "attention denominator must be positive, got " +
            std::to_string(s_eval.s2));
      }
      const double den = std::max(s_eval.s2, kAttDenFloor);
      const double ratio = s_eval.s1 / den;
      const double sg = sigmoid(ratio);
      const double dsig = sg * (1.0 - sg);
      const double up_num = upstream * dsig / den * inv_n;
      const double up_den = -upstream * dsig * s_eval.s1 / (den * den) * inv_n;
      for (std::size_t j : idx) {
        const InstanceForward f = forward(p, bag.instances[j]);
        accumulate_att_pair_grad(p, bag.instances[j], f, up_num, up_den, acc);
      }
      break;
    }
  }
}

std::vector<std::size_t> full_bag_subset(const Bag& bag) {
  std::vector<std::size_t> idx(bag.size());
  for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
  return idx;
}

}  // namespace midam
