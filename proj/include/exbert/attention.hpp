#pragma once

// Multi-head scaled dot-product attention with analytic backward pass.
//
// Projection matrices are stored as h x h blocks; head i owns columns
// [i*h_k, (i+1)*h_k) of the query, key and value projections, which is the
// same as keeping one h x h_k matrix per head.

#include <cmath>
#include <string>
#include <vector>

#include "exbert/error.hpp"
#include "exbert/tensor.hpp"

namespace exbert {

/// Row-wise softmax. The row max is subtracted before exponentiation.
template <class Scalar>
Matrix<Scalar> row_softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Scalar mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <class Scalar>
struct AttentionResult {
  Matrix<Scalar> context;  // q x d_v
  Matrix<Scalar> weights;  // q x r, rows sum to 1
};

/// softmax(Q K^T / sqrt(d_k)) V
template <class Scalar>
AttentionResult<Scalar> scaled_dot_attention(const Matrix<Scalar>& q, const Matrix<Scalar>& k,
                                             const Matrix<Scalar>& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() < 1 || k.rows() < 1) {
    throw ShapeError("attention shape mismatch");
  }
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  AttentionResult<Scalar> out;
  out.weights = row_softmax<Scalar>((q * k.transpose()) * scale);
  out.context = out.weights * v;
  return out;
}

template <class Scalar>
struct MultiHeadParams {
  Eigen::Index head_count = 1;
  Matrix<Scalar> query;   // h x h
  Matrix<Scalar> key;     // h x h
  Matrix<Scalar> value;   // h x h
  Matrix<Scalar> output;  // h x h

  static MultiHeadParams zeros(Eigen::Index dim, Eigen::Index heads) {
    if (heads < 1 || dim % heads != 0) {
      throw ShapeError("head count " + std::to_string(heads) + " must divide dim " + std::to_string(dim));
    }
    MultiHeadParams p;
    p.head_count = heads;
    p.query = Matrix<Scalar>::Zero(dim, dim);
    p.key = Matrix<Scalar>::Zero(dim, dim);
    p.value = Matrix<Scalar>::Zero(dim, dim);
    p.output = Matrix<Scalar>::Zero(dim, dim);
    return p;
  }

  Eigen::Index dim() const noexcept { return query.rows(); }
  Eigen::Index head_dim() const noexcept { return query.rows() / head_count; }

  auto query_projection(Eigen::Index head) const { return query.middleCols(head * head_dim(), head_dim()); }
  auto key_projection(Eigen::Index head) const { return key.middleCols(head * head_dim(), head_dim()); }
  auto value_projection(Eigen::Index head) const { return value.middleCols(head * head_dim(), head_dim()); }

  void validate() const {
    auto h = dim();
    if (head_count < 1 || h % head_count != 0) throw ShapeError("head count must divide dim");
    for (const auto* m : {&query, &key, &value, &output}) {
      if (m->rows() != h || m->cols() != h) throw ShapeError("projection must be h x h");
    }
  }
};

template <class Scalar>
struct MultiHeadResult {
  Matrix<Scalar> context;               // a x h
  std::vector<Matrix<Scalar>> weights;  // head_count matrices of a x b
  // Kept for the backward pass.
  Matrix<Scalar> q, k, v, concat;
};

/// Keys and values are two projections of `source`.
template <class Scalar>
MultiHeadResult<Scalar> multi_head_attention(const Matrix<Scalar>& queries, const Matrix<Scalar>& source,
                                             const MultiHeadParams<Scalar>& params) {
  params.validate();
  const auto h = params.dim();
  if (queries.cols() != h || source.cols() != h) {
    throw ShapeError("multi-head input width " + std::to_string(queries.cols()) + "/" +
                     std::to_string(source.cols()) + " != " + std::to_string(h));
  }
  if (source.rows() < 1) throw ShapeError("attention over zero rows");
  const auto hk = params.head_dim();
  MultiHeadResult<Scalar> out;
  out.q = queries * params.query;
  out.k = source * params.key;
  out.v = source * params.value;
  out.concat.resize(queries.rows(), h);
  out.weights.reserve(static_cast<std::size_t>(params.head_count));
  for (Eigen::Index i = 0; i < params.head_count; ++i) {
    Matrix<Scalar> qi = out.q.middleCols(i * hk, hk);
    Matrix<Scalar> ki = out.k.middleCols(i * hk, hk);
    Matrix<Scalar> vi = out.v.middleCols(i * hk, hk);
    auto head = scaled_dot_attention<Scalar>(qi, ki, vi);
    out.concat.middleCols(i * hk, hk) = head.context;
    out.weights.push_back(std::move(head.weights));
  }
  out.context = out.concat * params.output;
  return out;
}

/// Head-averaged attention weights (a x b).
template <class Scalar>
Matrix<Scalar> mean_head_weights(const MultiHeadResult<Scalar>& result) {
  Matrix<Scalar> avg = Matrix<Scalar>::Zero(result.weights.front().rows(), result.weights.front().cols());
  for (const auto& w : result.weights) avg += w;
  return avg / static_cast<Scalar>(result.weights.size());
}

/// Parameter gradients of a multi-head block given dL/dcontext. Inputs are
/// treated as constants.
template <class Scalar>
MultiHeadParams<Scalar> multi_head_backward(const Matrix<Scalar>& queries, const Matrix<Scalar>& source,
                                            const MultiHeadParams<Scalar>& params,
                                            const MultiHeadResult<Scalar>& fwd, const Matrix<Scalar>& d_context) {
  const auto hk = params.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(hk));
  MultiHeadParams<Scalar> grad;
  grad.head_count = params.head_count;
  grad.output = fwd.concat.transpose() * d_context;
  Matrix<Scalar> d_concat = d_context * params.output.transpose();
  Matrix<Scalar> dq(fwd.q.rows(), fwd.q.cols());
  Matrix<Scalar> dk(fwd.k.rows(), fwd.k.cols());
  Matrix<Scalar> dv(fwd.v.rows(), fwd.v.cols());
  for (Eigen::Index i = 0; i < params.head_count; ++i) {
    const auto& p = fwd.weights[static_cast<std::size_t>(i)];
    Matrix<Scalar> d_out = d_concat.middleCols(i * hk, hk);
    Matrix<Scalar> vi = fwd.v.middleCols(i * hk, hk);
    Matrix<Scalar> dp = d_out * vi.transpose();
    dv.middleCols(i * hk, hk) = p.transpose() * d_out;
    // softmax backward, row by row
    Matrix<Scalar> ds = p.cwiseProduct(dp);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      Scalar dot = ds.row(r).sum();
      ds.row(r) -= dot * p.row(r);
    }
    ds *= scale;
    dq.middleCols(i * hk, hk) = ds * fwd.k.middleCols(i * hk, hk);
    dk.middleCols(i * hk, hk) = ds.transpose() * fwd.q.middleCols(i * hk, hk);
  }
  grad.query = queries.transpose() * dq;
  grad.key = source.transpose() * dk;
  grad.value = source.transpose() * dv;
  return grad;
}

}  // namespace exbert
