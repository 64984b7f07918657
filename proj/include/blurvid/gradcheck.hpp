#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "blurvid/tensor.hpp"

namespace blurvid {

template <typename T>
using ScalarFn = std::function<BasicTensor<T>(const std::vector<BasicTensor<T>>&)>;

struct GradcheckOptions {
  double epsilon = 1e-3;
  // Elements checked per input; 0 checks all of them. A subset is drawn
  // deterministically from `seed` when an input is larger.
  std::size_t max_elements = 0;
  unsigned seed = 0;
  // When > 0, elements where the forward and backward one-sided differences
  // disagree (a non-differentiable point, e.g. a bilinear cell boundary,
  // within epsilon) are skipped. A fraction of skipped elements above this
  // limit makes the check return +inf.
  double max_kink_fraction = 0.0;
};

// Max over checked input elements of
//   |analytic - central difference| / max(|analytic|, |numeric|, 1e-8).
template <typename T>
double gradcheck(const ScalarFn<T>& f, const std::vector<BasicTensor<T>>& inputs,
                 const GradcheckOptions& opt = {}) {
  if (!(opt.epsilon > 0)) throw Error("gradcheck: epsilon must be positive");

  std::vector<BasicTensor<T>> analytic;
  {
    Tape<T> tape;
    std::vector<BasicTensor<T>> watched;
    for (const auto& x : inputs) watched.push_back(tape.watch(x));
    auto loss = f(watched);
    auto grads = tape.backward(loss);
    for (const auto& w : watched) analytic.push_back(grads.of(w));
  }

  auto eval_at = [&](std::size_t which, std::size_t idx, double delta) {
    std::vector<BasicTensor<T>> xs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (k != which) {
        xs.push_back(inputs[k].detach());
        continue;
      }
      std::vector<T> v(inputs[k].values());
      v[idx] = static_cast<T>(static_cast<double>(v[idx]) + delta);
      xs.emplace_back(inputs[k].shape(), std::move(v));
    }
    return static_cast<double>(f(xs).item());
  };

  const bool skip_kinks = opt.max_kink_fraction > 0;
  const double f0 = skip_kinks ? static_cast<double>(f(inputs).item()) : 0.0;
  std::size_t checked = 0, kinks = 0;

  std::mt19937 rng(opt.seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(inputs[k].size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opt.max_elements && idx.size() > opt.max_elements) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_elements);
    }
    for (std::size_t i : idx) {
      const double fp = eval_at(k, i, opt.epsilon), fm = eval_at(k, i, -opt.epsilon);
      const double num = (fp - fm) / (2.0 * opt.epsilon);
      ++checked;
      if (skip_kinks) {
        const double fwd = (fp - f0) / opt.epsilon, bwd = (f0 - fm) / opt.epsilon;
        if (std::abs(fwd - bwd) > 1e-3 * std::max({std::abs(fwd), std::abs(bwd), 1e-4})) {
          ++kinks;
          continue;
        }
      }
      const double ana = static_cast<double>(analytic[k][static_cast<std::int64_t>(i)]);
      const double denom = std::max({std::abs(ana), std::abs(num), 1e-8});
      worst = std::max(worst, std::abs(ana - num) / denom);
    }
  }
  if (skip_kinks && static_cast<double>(kinks) > opt.max_kink_fraction * static_cast<double>(checked))
    return std::numeric_limits<double>::infinity();
  return worst;
}

}  // namespace blurvid
