#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "fedsvm/tensor.hpp"

namespace fedsvm {

using Rng = std::mt19937_64;

/// Fully connected layer followed by ReLU. weights is out x in.
struct DenseLayer {
  Tensor weights;
  Tensor bias;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Embedding classifier f(x) = W g(x). The encoder g is a stack of ReLU
/// dense layers; the logit matrix W (K x d) has no bias and row k is the
/// class embedding of class k.
///
/// The same type doubles as a gradient container with identical layout.
struct Model {
  std::vector<DenseLayer> encoder;
  Tensor logit_matrix;

  /// Fan-balanced uniform init, limit sqrt(6 / (fan_in + fan_out)); biases 0.
  /// hidden_widths may be empty, giving a single input->embedding layer.
  static Model initialize(std::size_t input_dim,
                          const std::vector<std::size_t>& hidden_widths,
                          std::size_t embedding_dim, std::size_t num_classes,
                          Rng& rng);

  /// Model with every parameter zero and the same shapes as `like`.
  static Model zeros_like(const Model& like);

  std::size_t input_dim() const;
  std::size_t embedding_dim() const { return logit_matrix.cols(); }
  std::size_t num_classes() const { return logit_matrix.rows(); }
  std::size_t parameter_count() const;

  /// Throws ShapeError on malformed layer chains.
  void validate() const;

  friend bool operator==(const Model&, const Model&) = default;
};

/// Structural compatibility: every parameter tensor has the same shape.
bool compatible(const Model& a, const Model& b);
void require_compatible(const Model& a, const Model& b, std::string_view what);

struct Batch {
  Tensor inputs;  // B x P
  std::vector<std::size_t> labels;
};

/// Activations retained for backpropagation.
struct ForwardPass {
  std::vector<Tensor> activations;  // activations[0] = inputs, back() = g(x)
  Tensor logits;                    // B x K

  const Tensor& embeddings() const { return activations.back(); }
};

ForwardPass forward(const Model& model, const Tensor& inputs);

/// B x d embedding matrix g(x).
Tensor encode(const Model& model, const Tensor& inputs);

/// Nearest class embedding by inner product; ties go to the lowest index.
std::vector<std::size_t> predict(const Model& model, const Tensor& inputs);

/// Row-wise max-shifted softmax.
Tensor softmax(const Tensor& logits);

/// Backpropagates d(loss)/d(logits) and an optional extra d(loss)/d(g(x))
/// (pass an empty tensor for none) through the network.
Model backward(const Model& model, const ForwardPass& pass,
               const Tensor& logit_grad, const Tensor& embedding_grad);

struct LossAndGradient {
  double loss = 0.0;
  Model grad;
};

/// Mean softmax cross-entropy over the batch and its exact gradient.
LossAndGradient loss_and_gradient(const Model& model, const Batch& batch);

/// Cross-entropy from a precomputed forward pass; fills logit_grad (B x K).
double cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels,
                     Tensor* logit_grad);

/// Flat parameter order: for each encoder layer its weights (row-major)
/// then its bias, followed by the logit matrix row-major.
Tensor flatten_params(const Model& model);
Model unflatten_params(const Model& like, const Tensor& flat);

}  // namespace fedsvm
