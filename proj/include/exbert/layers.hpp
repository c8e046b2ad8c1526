#pragma once

// Knowledge mixture, composition, pooling and the MLP classifier head.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "exbert/error.hpp"
#include "exbert/tensor.hpp"

namespace exbert {

/// What the per-token mixture gate looks at.
enum class GateInput {
  contexts,  // [C_ext,t ; C_cls,t], weight length 2h
  hidden,    // H_t, weight length h
  global,    // bias only, one gate value for every token
};

inline std::string to_string(GateInput g) {
  switch (g) {
    case GateInput::contexts: return "contexts";
    case GateInput::hidden: return "hidden";
    case GateInput::global: return "global";
  }
  return "?";
}

inline GateInput parse_gate_input(const std::string& s) {
  if (s == "contexts") return GateInput::contexts;
  if (s == "hidden") return GateInput::hidden;
  if (s == "global") return GateInput::global;
  throw Error("unknown gate input: " + s);
}

inline Eigen::Index gate_width(GateInput input, Eigen::Index dim) {
  switch (input) {
    case GateInput::contexts: return 2 * dim;
    case GateInput::hidden: return dim;
    case GateInput::global: return 0;
  }
  return 0;
}

template <class Scalar>
struct MixtureParams {
  Matrix<Scalar> weight;  // 1 x gate_width
  Matrix<Scalar> bias;    // 1 x 1
};

template <class Scalar>
struct MixtureResult {
  Matrix<Scalar> mixed;  // M, rows x h
  Vector<Scalar> a;      // weight on the knowledge context per row
  Vector<Scalar> b;      // J - a

  Vector<Scalar> a_plus_b() const { return a + b; }
};

template <class Scalar>
Scalar logistic(Scalar x) {
  return x >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

/// Gate pre-activation per row.
template <class Scalar>
Vector<Scalar> gate_logits(const Matrix<Scalar>& c_ext, const Matrix<Scalar>& c_cls, const Matrix<Scalar>& hidden,
                           const MixtureParams<Scalar>& gate, GateInput input) {
  const auto rows = c_ext.rows();
  const auto h = c_ext.cols();
  Vector<Scalar> z = Vector<Scalar>::Constant(rows, gate.bias(0, 0));
  switch (input) {
    case GateInput::contexts:
      z += c_ext * gate.weight.leftCols(h).transpose() + c_cls * gate.weight.rightCols(h).transpose();
      break;
    case GateInput::hidden: z += hidden * gate.weight.transpose(); break;
    case GateInput::global: break;
  }
  return z;
}

/// M = A C_ext + B C_cls with B = J - A computed from A.
template <class Scalar>
MixtureResult<Scalar> mix(const Matrix<Scalar>& c_ext, const Matrix<Scalar>& c_cls, const Vector<Scalar>& a) {
  if (c_ext.rows() != c_cls.rows() || c_ext.cols() != c_cls.cols() || a.size() != c_ext.rows()) {
    throw ShapeError("mixture shape mismatch");
  }
  MixtureResult<Scalar> out;
  out.a = a;
  out.b = (Vector<Scalar>::Ones(a.size()) - a);
  out.mixed = out.a.asDiagonal() * c_ext + out.b.asDiagonal() * c_cls;
  return out;
}

template <class Scalar>
MixtureResult<Scalar> mixture(const Matrix<Scalar>& c_ext, const Matrix<Scalar>& c_cls,
                              const MixtureParams<Scalar>& gate, GateInput input = GateInput::contexts,
                              const Matrix<Scalar>& hidden = {}) {
  if (c_ext.rows() != c_cls.rows() || c_ext.cols() != c_cls.cols()) throw ShapeError("mixture shape mismatch");
  if (gate.weight.cols() != gate_width(input, c_ext.cols())) throw ShapeError("gate width mismatch");
  if (input == GateInput::hidden && (hidden.rows() != c_ext.rows() || hidden.cols() != c_ext.cols())) {
    throw ShapeError("gate hidden input shape mismatch");
  }
  Vector<Scalar> z = gate_logits(c_ext, c_cls, hidden, gate, input);
  Vector<Scalar> a = z.unaryExpr([](Scalar x) { return logistic(x); });
  return mix(c_ext, c_cls, a);
}

template <class Scalar>
Matrix<Scalar> compose(const Matrix<Scalar>& hidden, const Matrix<Scalar>& mixed) {
  if (hidden.rows() != mixed.rows() || hidden.cols() != mixed.cols()) throw ShapeError("compose shape mismatch");
  return hidden + mixed;
}

template <class Scalar>
struct Pooled {
  Vector<Scalar> mean;
  Vector<Scalar> max;
  std::vector<Eigen::Index> argmax;  // row index of each column's max (first on ties)
};

template <class Scalar>
Pooled<Scalar> pool(const Matrix<Scalar>& x) {
  if (x.rows() < 1) throw ShapeError("pooling over zero rows");
  Pooled<Scalar> out;
  out.mean = x.colwise().mean().transpose();
  out.max.resize(x.cols());
  out.argmax.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::Index r = 0;
    out.max[c] = x.col(c).maxCoeff(&r);
    out.argmax[static_cast<std::size_t>(c)] = r;
  }
  return out;
}

/// f = [mean(H) ; mean(H^) ; max(H) ; max(H^)]
template <class Scalar>
Vector<Scalar> feature_vector(const Pooled<Scalar>& hidden, const Pooled<Scalar>& knowledge_aware) {
  const auto h = hidden.mean.size();
  if (knowledge_aware.mean.size() != h) throw ShapeError("feature width mismatch");
  Vector<Scalar> f(4 * h);
  f << hidden.mean, knowledge_aware.mean, hidden.max, knowledge_aware.max;
  return f;
}

template <class Scalar>
Vector<Scalar> feature_vector(const Matrix<Scalar>& hidden, const Matrix<Scalar>& knowledge_aware) {
  if (hidden.cols() != knowledge_aware.cols()) throw ShapeError("feature width mismatch");
  return feature_vector(pool(hidden), pool(knowledge_aware));
}

template <class Scalar>
struct ClassifierParams {
  Matrix<Scalar> w1, b1;  // 4h x d1, 1 x d1
  Matrix<Scalar> w2, b2;  // d1 x d2, 1 x d2
  Matrix<Scalar> w3, b3;  // d2 x C, 1 x C
  double dropout_rate = 0.5;

  Eigen::Index input_width() const noexcept { return w1.rows(); }
  Eigen::Index class_count() const noexcept { return w3.cols(); }
};

template <class Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits) {
  Vector<Scalar> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// Inverted-dropout keep mask (entries 0 or 1/(1-rate)), seeded.
template <class Scalar>
Vector<Scalar> dropout_mask(Eigen::Index size, double rate, std::uint64_t seed, std::uint64_t stream) {
  Vector<Scalar> mask(size);
  if (rate <= 0.0) return mask.setOnes();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < size; ++i) mask[i] = keep(rng) ? scale : Scalar(0);
  return mask;
}

template <class Scalar>
struct ClassifierTrace {
  Vector<Scalar> input;  // after dropout
  Vector<Scalar> mask;
  Vector<Scalar> h1, h2;
  Vector<Scalar> probs;
};

template <class Scalar>
ClassifierTrace<Scalar> classifier_forward(const Vector<Scalar>& f, const ClassifierParams<Scalar>& p, bool training,
                                           std::uint64_t seed, std::uint64_t stream = 0) {
  if (f.size() != p.input_width()) throw ShapeError("classifier input width mismatch");
  ClassifierTrace<Scalar> t;
  t.mask = training ? dropout_mask<Scalar>(f.size(), p.dropout_rate, seed, stream) : Vector<Scalar>::Ones(f.size());
  t.input = f.cwiseProduct(t.mask);
  t.h1 = (p.w1.transpose() * t.input + p.b1.transpose()).array().tanh().matrix();
  t.h2 = (p.w2.transpose() * t.h1 + p.b2.transpose()).array().tanh().matrix();
  t.probs = softmax<Scalar>(p.w3.transpose() * t.h2 + p.b3.transpose());
  return t;
}

/// Class probabilities for one feature vector.
template <class Scalar>
Vector<Scalar> classify(const Vector<Scalar>& f, const ClassifierParams<Scalar>& p, bool training,
                        std::uint64_t seed) {
  return classifier_forward(f, p, training, seed).probs;
}

}  // namespace exbert
