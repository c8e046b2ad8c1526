#pragma once

// Knowledge-integration model: two multi-head attention blocks (pair tokens
// over knowledge rows, repeated CLS over pair tokens), a per-token mixture
// gate, additive composition, mean/max pooling and a two-layer tanh MLP.
// Encoder outputs are inputs, not parameters.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "exbert/attention.hpp"
#include "exbert/error.hpp"
#include "exbert/layers.hpp"
#include "exbert/tensor.hpp"

namespace exbert {

struct ModelConfig {
  Eigen::Index dim = 32;
  Eigen::Index heads = 4;
  Eigen::Index hidden1 = 0;  // 0 -> dim
  Eigen::Index hidden2 = 0;  // 0 -> dim / 2
  Eigen::Index classes = 3;
  double dropout = 0.5;
  GateInput gate_input = GateInput::contexts;
  // Forces the gate to zero so M = C_cls for every example.
  bool ablate_knowledge = false;

  Eigen::Index first_hidden() const noexcept { return hidden1 > 0 ? hidden1 : dim; }
  Eigen::Index second_hidden() const noexcept { return hidden2 > 0 ? hidden2 : std::max<Eigen::Index>(1, dim / 2); }

  void validate() const {
    if (dim < 1) throw Error("dim must be >= 1");
    if (heads < 1 || dim % heads != 0) {
      throw Error("head count " + std::to_string(heads) + " must divide dim " + std::to_string(dim));
    }
    if (classes < 2) throw Error("class count must be >= 2");
    if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must be in [0, 1)");
  }
};

/// Encoder output for [CLS] premise [SEP] hypothesis [SEP].
struct PairEncoding {
  std::vector<std::string> tokens;  // n + m + 3 entries, markers included
  MatrixD hidden;                   // (n + m + 3) x h
  VectorD cls;                      // h
  Eigen::Index premise_len = 0;
  Eigen::Index hypothesis_len = 0;

  void validate() const {
    if (hidden.rows() != premise_len + hypothesis_len + 3) throw ShapeError("pair encoding must have n+m+3 rows");
    if (cls.size() != hidden.cols()) throw ShapeError("cls width mismatch");
    if (!hidden.allFinite() || !cls.allFinite()) throw NumericError("non-finite pair encoding");
  }
};

/// One mean-pooled row per knowledge sentence (k x h).
struct ExternalEncoding {
  MatrixD rows;
  std::vector<std::string> sentences;
};

struct Example {
  std::string id;
  PairEncoding pair;
  ExternalEncoding knowledge;
  Eigen::Index label = 0;
};

template <class Scalar>
struct ModelParams {
  MultiHeadParams<Scalar> knowledge_attention;
  MultiHeadParams<Scalar> cls_attention;
  MixtureParams<Scalar> gate;
  ClassifierParams<Scalar> classifier;

  /// Visits every tensor in a fixed order as (name, matrix).
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix<Scalar>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  ModelParams zeros_like() const {
    ModelParams z = *this;
    z.visit([](const std::string&, Matrix<Scalar>& m) { m.setZero(); });
    return z;
  }

  template <class Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.knowledge_attention.head_count = knowledge_attention.head_count;
    out.cls_attention.head_count = cls_attention.head_count;
    out.classifier.dropout_rate = classifier.dropout_rate;
    std::vector<const Matrix<Scalar>*> src;
    visit([&](const std::string&, const Matrix<Scalar>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Matrix<Other>& m) { m = src[i++]->template cast<Other>(); });
    return out;
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f("knowledge.query", self.knowledge_attention.query);
    f("knowledge.key", self.knowledge_attention.key);
    f("knowledge.value", self.knowledge_attention.value);
    f("knowledge.output", self.knowledge_attention.output);
    f("cls.query", self.cls_attention.query);
    f("cls.key", self.cls_attention.key);
    f("cls.value", self.cls_attention.value);
    f("cls.output", self.cls_attention.output);
    f("gate.weight", self.gate.weight);
    f("gate.bias", self.gate.bias);
    f("classifier.w1", self.classifier.w1);
    f("classifier.b1", self.classifier.b1);
    f("classifier.w2", self.classifier.w2);
    f("classifier.b2", self.classifier.b2);
    f("classifier.w3", self.classifier.w3);
    f("classifier.b3", self.classifier.b3);
  }
};

/// Zero tensors of the shapes implied by `config`.
template <class Scalar = double>
ModelParams<Scalar> zero_params(const ModelConfig& config) {
  config.validate();
  const auto h = config.dim;
  ModelParams<Scalar> p;
  p.knowledge_attention = MultiHeadParams<Scalar>::zeros(h, config.heads);
  p.cls_attention = MultiHeadParams<Scalar>::zeros(h, config.heads);
  p.gate.weight = Matrix<Scalar>::Zero(1, gate_width(config.gate_input, h));
  p.gate.bias = Matrix<Scalar>::Zero(1, 1);
  const auto d1 = config.first_hidden();
  const auto d2 = config.second_hidden();
  p.classifier.w1 = Matrix<Scalar>::Zero(4 * h, d1);
  p.classifier.b1 = Matrix<Scalar>::Zero(1, d1);
  p.classifier.w2 = Matrix<Scalar>::Zero(d1, d2);
  p.classifier.b2 = Matrix<Scalar>::Zero(1, d2);
  p.classifier.w3 = Matrix<Scalar>::Zero(d2, config.classes);
  p.classifier.b3 = Matrix<Scalar>::Zero(1, config.classes);
  p.classifier.dropout_rate = config.dropout;
  return p;
}

/// Glorot-uniform weights, zero biases.
inline ModelParams<double> init_params(const ModelConfig& config, std::uint64_t seed) {
  auto p = zero_params<double>(config);
  std::mt19937_64 rng(seed);
  p.visit([&](const std::string& name, MatrixD& m) {
    if (name.ends_with("bias") || name.find(".b") != std::string::npos) return;
    double fan_in = static_cast<double>(m.rows());
    double fan_out = static_cast<double>(m.cols());
    if (name == "gate.weight") fan_in = fan_out = static_cast<double>(m.cols());
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  });
  return p;
}

/// Pair tokens attending over knowledge rows: (n+m+3) x h.
template <class Scalar>
MultiHeadResult<Scalar> knowledge_context(const Matrix<Scalar>& hidden, const Matrix<Scalar>& knowledge,
                                          const MultiHeadParams<Scalar>& params) {
  if (knowledge.rows() == 0) throw ShapeError("no external knowledge");
  return multi_head_attention<Scalar>(hidden, knowledge, params);
}

/// Query rows are h_cls repeated once per pair token.
template <class Scalar>
Matrix<Scalar> repeat_cls(const Vector<Scalar>& cls, Eigen::Index rows) {
  return cls.transpose().replicate(rows, 1);
}

template <class Scalar>
MultiHeadResult<Scalar> cls_context(const Matrix<Scalar>& hidden, const Vector<Scalar>& cls,
                                    const MultiHeadParams<Scalar>& params) {
  return multi_head_attention<Scalar>(repeat_cls(cls, hidden.rows()), hidden, params);
}

template <class Scalar>
struct ForwardTrace {
  Matrix<Scalar> hidden;
  Matrix<Scalar> cls_queries;
  bool uses_knowledge = false;
  MultiHeadResult<Scalar> knowledge;
  MultiHeadResult<Scalar> cls;
  MixtureResult<Scalar> mixture;
  Matrix<Scalar> composed;  // H^
  Pooled<Scalar> pooled_hidden;
  Pooled<Scalar> pooled_composed;
  Vector<Scalar> features;
  ClassifierTrace<Scalar> classifier;
};

template <class Scalar>
ForwardTrace<Scalar> forward(const Example& ex, const ModelParams<Scalar>& p, const ModelConfig& config,
                             bool training, std::uint64_t seed, std::uint64_t stream = 0) {
  ex.pair.validate();
  ForwardTrace<Scalar> t;
  t.hidden = ex.pair.hidden.template cast<Scalar>();
  const Vector<Scalar> cls = ex.pair.cls.template cast<Scalar>();
  t.cls_queries = repeat_cls(cls, t.hidden.rows());
  t.cls = multi_head_attention<Scalar>(t.cls_queries, t.hidden, p.cls_attention);
  t.uses_knowledge = !config.ablate_knowledge && ex.knowledge.rows.rows() > 0;
  if (t.uses_knowledge) {
    Matrix<Scalar> knowledge = ex.knowledge.rows.template cast<Scalar>();
    t.knowledge = knowledge_context<Scalar>(t.hidden, knowledge, p.knowledge_attention);
    t.mixture = mixture<Scalar>(t.knowledge.context, t.cls.context, p.gate, config.gate_input, t.hidden);
  } else {
    // gate pinned to 0: M = C_cls
    Matrix<Scalar> zeros = Matrix<Scalar>::Zero(t.cls.context.rows(), t.cls.context.cols());
    t.mixture = mix<Scalar>(zeros, t.cls.context, Vector<Scalar>::Zero(t.hidden.rows()));
  }
  t.composed = compose<Scalar>(t.hidden, t.mixture.mixed);
  t.pooled_hidden = pool(t.hidden);
  t.pooled_composed = pool(t.composed);
  t.features = feature_vector(t.pooled_hidden, t.pooled_composed);
  t.classifier = classifier_forward(t.features, p.classifier, training, seed, stream);
  return t;
}

template <class Scalar>
Vector<Scalar> predict(const Example& ex, const ModelParams<Scalar>& p, const ModelConfig& config) {
  return forward(ex, p, config, false, 0).classifier.probs;
}

template <class Scalar>
struct LossAndGrads {
  Scalar loss = 0;
  ModelParams<Scalar> grads;
};

namespace detail {

template <class Scalar>
void accumulate(MultiHeadParams<Scalar>& into, const MultiHeadParams<Scalar>& g) {
  into.query += g.query;
  into.key += g.key;
  into.value += g.value;
  into.output += g.output;
}

template <class Scalar>
void backward(const Example& ex, const ModelParams<Scalar>& p, const ModelConfig& config,
              const ForwardTrace<Scalar>& t, Scalar weight, ModelParams<Scalar>& g) {
  const auto& c = t.classifier;
  const auto& cp = p.classifier;
  Vector<Scalar> d_logits = c.probs;
  d_logits[ex.label] -= Scalar(1);
  d_logits *= weight;

  g.classifier.w3 += c.h2 * d_logits.transpose();
  g.classifier.b3 += d_logits.transpose();
  Vector<Scalar> dz2 = (cp.w3 * d_logits).cwiseProduct((1 - c.h2.array().square()).matrix());
  g.classifier.w2 += c.h1 * dz2.transpose();
  g.classifier.b2 += dz2.transpose();
  Vector<Scalar> dz1 = (cp.w2 * dz2).cwiseProduct((1 - c.h1.array().square()).matrix());
  g.classifier.w1 += c.input * dz1.transpose();
  g.classifier.b1 += dz1.transpose();
  Vector<Scalar> df = (cp.w1 * dz1).cwiseProduct(c.mask);

  // only the H^ slices depend on parameters
  const auto rows = t.composed.rows();
  const auto h = t.composed.cols();
  Matrix<Scalar> d_composed = (df.segment(h, h) / static_cast<Scalar>(rows)).transpose().replicate(rows, 1);
  for (Eigen::Index col = 0; col < h; ++col) {
    d_composed(t.pooled_composed.argmax[static_cast<std::size_t>(col)], col) += df[3 * h + col];
  }
  const Matrix<Scalar>& d_mixed = d_composed;

  Matrix<Scalar> d_cls;
  if (t.uses_knowledge) {
    const auto& a = t.mixture.a;
    const auto& c_ext = t.knowledge.context;
    const auto& c_cls = t.cls.context;
    Matrix<Scalar> d_ext = a.asDiagonal() * d_mixed;
    d_cls = t.mixture.b.asDiagonal() * d_mixed;
    Vector<Scalar> da = (d_mixed.cwiseProduct(c_ext - c_cls)).rowwise().sum();
    Vector<Scalar> dz = da.cwiseProduct(a).cwiseProduct(t.mixture.b);
    g.gate.bias(0, 0) += dz.sum();
    switch (config.gate_input) {
      case GateInput::contexts:
        g.gate.weight.leftCols(h) += dz.transpose() * c_ext;
        g.gate.weight.rightCols(h) += dz.transpose() * c_cls;
        d_ext += dz * p.gate.weight.leftCols(h);
        d_cls += dz * p.gate.weight.rightCols(h);
        break;
      case GateInput::hidden: g.gate.weight += dz.transpose() * t.hidden; break;
      case GateInput::global: break;
    }
    Matrix<Scalar> knowledge = ex.knowledge.rows.template cast<Scalar>();
    accumulate(g.knowledge_attention,
               multi_head_backward<Scalar>(t.hidden, knowledge, p.knowledge_attention, t.knowledge, d_ext));
  } else {
    d_cls = d_mixed;
  }
  accumulate(g.cls_attention, multi_head_backward<Scalar>(t.cls_queries, t.hidden, p.cls_attention, t.cls, d_cls));
}

}  // namespace detail

/// Mean cross-entropy over the batch and its gradient for every parameter.
/// Dropout masks are seeded by (seed, position in batch).
template <class Scalar>
LossAndGrads<Scalar> loss_and_grads(std::span<const Example> batch, const ModelParams<Scalar>& p,
                                    const ModelConfig& config, bool training, std::uint64_t seed) {
  if (batch.empty()) throw Error("empty batch");
  LossAndGrads<Scalar> out;
  out.grads = p.zeros_like();
  const Scalar weight = Scalar(1) / static_cast<Scalar>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    if (ex.label < 0 || ex.label >= p.classifier.class_count()) {
      throw Error("label " + std::to_string(ex.label) + " out of range for example " + ex.id);
    }
    auto t = forward(ex, p, config, training, seed, i);
    Scalar prob = t.classifier.probs[ex.label];
    Scalar loss = -std::log(prob);
    if (!std::isfinite(static_cast<double>(loss))) {
      throw NumericError("non-finite loss on example " + ex.id + " (p_label=" + std::to_string(double(prob)) + ")");
    }
    out.loss += loss * weight;
    detail::backward(ex, p, config, t, weight, out.grads);
  }
  return out;
}

/// Head-averaged knowledge attention, transposed to k x (n+m+3) so rows are
/// knowledge sentences and columns are pair tokens.
struct Heatmap {
  MatrixD weights;
  std::vector<std::string> tokens;
  std::vector<std::string> sentences;
};

template <class Scalar>
Heatmap export_attention_heatmap(const PairEncoding& pair, const ExternalEncoding& knowledge,
                                 const MultiHeadParams<Scalar>& params) {
  if (knowledge.rows.rows() < 1) throw ShapeError("heatmap needs at least one knowledge sentence");
  Matrix<Scalar> hidden = pair.hidden.template cast<Scalar>();
  Matrix<Scalar> rows = knowledge.rows.template cast<Scalar>();
  auto res = knowledge_context<Scalar>(hidden, rows, params);
  Heatmap out;
  out.weights = mean_head_weights(res).transpose().template cast<double>();
  out.tokens = pair.tokens;
  out.sentences = knowledge.sentences;
  return out;
}

}  // namespace exbert
