#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "exbert/model.hpp"

namespace exbert {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over every tensor of a ModelParams.
template <class Scalar>
class Adam {
 public:
  Adam(const ModelParams<Scalar>& like, AdamOptions options)
      : options_(options), first_(like.zeros_like()), second_(like.zeros_like()) {}

  void step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads) {
    ++t_;
    const Scalar lr = static_cast<Scalar>(options_.learning_rate);
    const Scalar b1 = static_cast<Scalar>(options_.beta1);
    const Scalar b2 = static_cast<Scalar>(options_.beta2);
    const Scalar eps = static_cast<Scalar>(options_.epsilon);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(t_));

    std::vector<const Matrix<Scalar>*> g;
    std::vector<Matrix<Scalar>*> m, v;
    grads.visit([&](const std::string&, const Matrix<Scalar>& x) { g.push_back(&x); });
    first_.visit([&](const std::string&, Matrix<Scalar>& x) { m.push_back(&x); });
    second_.visit([&](const std::string&, Matrix<Scalar>& x) { v.push_back(&x); });
    std::size_t i = 0;
    params.visit([&](const std::string&, Matrix<Scalar>& p) {
      auto& mi = *m[i];
      auto& vi = *v[i];
      const auto& gi = *g[i];
      mi = b1 * mi + (1 - b1) * gi;
      vi = b2 * vi + (1 - b2) * gi.cwiseProduct(gi);
      p.array() -= lr * (mi.array() / c1) / ((vi.array() / c2).sqrt() + eps);
      ++i;
    });
  }

  long steps() const noexcept { return t_; }

 private:
  AdamOptions options_;
  ModelParams<Scalar> first_;
  ModelParams<Scalar> second_;
  long t_ = 0;
};

}  // namespace exbert
