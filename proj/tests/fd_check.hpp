#pragma once

// Central-difference gradient oracle. Builds the graph twice per probed input
// element and compares the analytic gradient of a scalar loss against
// (f(x+h) - f(x-h)) / 2h in double precision.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "srf/tensor.hpp"

namespace fd {

struct Report {
  double max_rel_err = 0;
  std::string worst;  // "input_k[i]" of the worst element
  size_t checked = 0;
};

// fn maps the leaf tensors to a scalar loss tensor. Leaves must be created
// with requires_grad.
inline Report check_gradients(
    const std::function<srf::Tensor<double>(std::vector<srf::Tensor<double>>&)>& fn,
    std::vector<std::vector<size_t>> shapes, std::vector<std::vector<double>> values,
    double h = 1e-5) {
  auto make_leaves = [&](const std::vector<std::vector<double>>& vals) {
    std::vector<srf::Tensor<double>> leaves;
    for (size_t k = 0; k < shapes.size(); ++k) {
      leaves.push_back(srf::Tensor<double>::from_data(shapes[k], vals[k], true));
    }
    return leaves;
  };

  auto leaves = make_leaves(values);
  srf::Tensor<double> loss = fn(leaves);
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) analytic.push_back(l.grad());

  Report rep;
  for (size_t k = 0; k < shapes.size(); ++k) {
    for (size_t i = 0; i < values[k].size(); ++i) {
      auto vp = values[k];
      auto vm = values[k];
      vp[i] += h;
      vm[i] -= h;
      auto vals_p = values;
      vals_p[k] = vp;
      auto vals_m = values;
      vals_m[k] = vm;
      auto lp = make_leaves(vals_p);
      auto lm = make_leaves(vals_m);
      double fp = fn(lp).item();
      double fm = fn(lm).item();
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[k][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      double rel = std::fabs(a - numeric) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input_" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

// Deterministic filler with values away from ReLU kinks.
inline std::vector<double> ramp(size_t n, double lo, double hi, uint64_t seed = 1) {
  srf::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) {
    x = rng.uniform(lo, hi);
    if (std::fabs(x) < 0.05) x += x < 0 ? -0.1 : 0.1;  // keep off subgradient kinks
  }
  return v;
}

}  // namespace fd
