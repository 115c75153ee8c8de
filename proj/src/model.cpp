#include "fedsvm/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fedsvm/error.hpp"

namespace fedsvm {

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(Shape{rows, cols});
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// out = act * W^T (+ bias), act: B x in, W: out x in
Tensor affine(const Tensor& act, const Tensor& weights, const Tensor* bias) {
  const std::size_t batch = act.rows();
  const std::size_t in = weights.cols();
  const std::size_t out_dim = weights.rows();
  if (act.cols() != in) {
    throw ShapeError(fmt::format("layer expects {} inputs, got {}", in,
                                 act.cols()));
  }
  Tensor out(Shape{batch, out_dim});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto a_row = act.row(b);
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = bias ? (*bias)[o] : 0.0;
      const auto w_row = weights.row(o);
      for (std::size_t i = 0; i < in; ++i) acc += a_row[i] * w_row[i];
      out.at(b, o) = acc;
    }
  }
  return out;
}

// grad_w (out x in) = delta^T * act ; grad_in (B x in) = delta * W
void affine_backward(const Tensor& act, const Tensor& weights,
                     const Tensor& delta, Tensor& grad_w, Tensor* grad_b,
                     Tensor* grad_in) {
  const std::size_t batch = act.rows();
  const std::size_t in = weights.cols();
  const std::size_t out_dim = weights.rows();
  grad_w = Tensor(Shape{out_dim, in});
  if (grad_b) *grad_b = Tensor(Shape{out_dim});
  if (grad_in) *grad_in = Tensor(Shape{batch, in});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto a_row = act.row(b);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double d = delta.at(b, o);
      if (grad_b) (*grad_b)[o] += d;
      if (d == 0.0) continue;
      auto gw_row = grad_w.row(o);
      for (std::size_t i = 0; i < in; ++i) gw_row[i] += d * a_row[i];
      if (grad_in) {
        auto gi_row = grad_in->row(b);
        const auto w_row = weights.row(o);
        for (std::size_t i = 0; i < in; ++i) gi_row[i] += d * w_row[i];
      }
    }
  }
}

}  // namespace

Model Model::initialize(std::size_t input_dim,
                        const std::vector<std::size_t>& hidden_widths,
                        std::size_t embedding_dim, std::size_t num_classes,
                        Rng& rng) {
  if (input_dim == 0 || embedding_dim == 0) {
    throw ShapeError("input and embedding dimensions must be positive");
  }
  if (num_classes < 2) throw ShapeError("a classifier needs at least 2 classes");
  Model m;
  std::size_t prev = input_dim;
  auto widths = hidden_widths;
  widths.push_back(embedding_dim);
  for (auto w : widths) {
    if (w == 0) throw ShapeError("hidden width must be positive");
    m.encoder.push_back({uniform_matrix(w, prev, rng), Tensor(Shape{w})});
    prev = w;
  }
  m.logit_matrix = uniform_matrix(num_classes, embedding_dim, rng);
  return m;
}

Model Model::zeros_like(const Model& like) {
  Model m;
  for (const auto& layer : like.encoder) {
    m.encoder.push_back(
        {Tensor::zeros_like(layer.weights), Tensor::zeros_like(layer.bias)});
  }
  m.logit_matrix = Tensor::zeros_like(like.logit_matrix);
  return m;
}

std::size_t Model::input_dim() const {
  return encoder.empty() ? embedding_dim() : encoder.front().in_dim();
}

std::size_t Model::parameter_count() const {
  std::size_t n = logit_matrix.size();
  for (const auto& layer : encoder) n += layer.weights.size() + layer.bias.size();
  return n;
}

void Model::validate() const {
  if (logit_matrix.rank() != 2) throw ShapeError("logit matrix must be rank 2");
  if (num_classes() < 2) throw ShapeError("a classifier needs at least 2 classes");
  std::size_t prev = 0;
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const auto& layer = encoder[l];
    if (layer.weights.rank() != 2 || layer.bias.rank() != 1 ||
        layer.bias.size() != layer.out_dim()) {
      throw ShapeError(fmt::format("encoder layer {} is malformed", l));
    }
    if (l > 0 && layer.in_dim() != prev) {
      throw ShapeError(fmt::format("encoder layer {} expects {} inputs, previous "
                                   "layer emits {}",
                                   l, layer.in_dim(), prev));
    }
    prev = layer.out_dim();
  }
  if (!encoder.empty() && prev != embedding_dim()) {
    throw ShapeError(fmt::format(
        "encoder output dimension {} != logit matrix columns {}", prev,
        embedding_dim()));
  }
}

bool compatible(const Model& a, const Model& b) {
  if (a.encoder.size() != b.encoder.size()) return false;
  if (!a.logit_matrix.same_shape(b.logit_matrix)) return false;
  for (std::size_t l = 0; l < a.encoder.size(); ++l) {
    if (!a.encoder[l].weights.same_shape(b.encoder[l].weights) ||
        !a.encoder[l].bias.same_shape(b.encoder[l].bias)) {
      return false;
    }
  }
  return true;
}

void require_compatible(const Model& a, const Model& b, std::string_view what) {
  if (!compatible(a, b)) {
    throw ShapeError(fmt::format("{}: models are not structurally compatible",
                                 what));
  }
}

ForwardPass forward(const Model& model, const Tensor& inputs) {
  if (inputs.rank() != 2) {
    throw ShapeError("inputs must be a B x P matrix, got " +
                     shape_string(inputs.shape()));
  }
  if (inputs.cols() != model.input_dim()) {
    throw ShapeError(fmt::format("model expects {} input features, got {}",
                                 model.input_dim(), inputs.cols()));
  }
  ForwardPass pass;
  pass.activations.reserve(model.encoder.size() + 1);
  pass.activations.push_back(inputs);
  for (const auto& layer : model.encoder) {
    Tensor z = affine(pass.activations.back(), layer.weights, &layer.bias);
    for (auto& v : z.values()) v = v > 0.0 ? v : 0.0;
    pass.activations.push_back(std::move(z));
  }
  pass.logits = affine(pass.activations.back(), model.logit_matrix, nullptr);
  return pass;
}

Tensor encode(const Model& model, const Tensor& inputs) {
  return std::move(forward(model, inputs).activations.back());
}

std::vector<std::size_t> predict(const Model& model, const Tensor& inputs) {
  const auto pass = forward(model, inputs);
  const auto& logits = pass.logits;
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto row = logits.row(b);
    // max_element returns the first maximum, i.e. the lowest class index.
    out[b] = static_cast<std::size_t>(
        std::distance(row.begin(), std::max_element(row.begin(), row.end())));
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  Tensor probs = logits;
  for (std::size_t b = 0; b < probs.rows(); ++b) {
    auto row = probs.row(b);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
  return probs;
}

double cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels,
                     Tensor* logit_grad) {
  const std::size_t batch = logits.rows();
  const std::size_t k = logits.cols();
  if (labels.size() != batch || batch == 0) {
    throw ShapeError(fmt::format("batch has {} rows but {} labels", batch,
                                 labels.size()));
  }
  if (logit_grad) *logit_grad = Tensor(Shape{batch, k});
  const double inv_b = 1.0 / static_cast<double>(batch);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = logits.row(b);
    const std::size_t y = labels[b];
    if (y >= k) {
      throw ShapeError(fmt::format("label {} out of range for {} classes", y, k));
    }
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto v : row) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    loss += log_z - row[y];
    if (logit_grad) {
      auto g = logit_grad->row(b);
      for (std::size_t c = 0; c < k; ++c) {
        g[c] = std::exp(row[c] - log_z) * inv_b;
      }
      g[y] -= inv_b;
    }
  }
  loss *= inv_b;
  require_finite(loss, "cross-entropy loss");
  return loss;
}

Model backward(const Model& model, const ForwardPass& pass,
               const Tensor& logit_grad, const Tensor& embedding_grad) {
  Model grad;
  grad.encoder.resize(model.encoder.size());
  Tensor delta;
  affine_backward(pass.embeddings(), model.logit_matrix, logit_grad,
                  grad.logit_matrix, nullptr, &delta);
  if (!embedding_grad.empty()) {
    delta += embedding_grad;
  }
  for (std::size_t l = model.encoder.size(); l-- > 0;) {
    const auto& out_act = pass.activations[l + 1];
    for (std::size_t i = 0; i < delta.size(); ++i) {
      if (!(out_act[i] > 0.0)) delta[i] = 0.0;
    }
    Tensor next;
    affine_backward(pass.activations[l], model.encoder[l].weights, delta,
                    grad.encoder[l].weights, &grad.encoder[l].bias,
                    l > 0 ? &next : nullptr);
    delta = std::move(next);
  }
  return grad;
}

LossAndGradient loss_and_gradient(const Model& model, const Batch& batch) {
  const auto pass = forward(model, batch.inputs);
  Tensor logit_grad;
  LossAndGradient out;
  out.loss = cross_entropy(pass.logits, batch.labels, &logit_grad);
  out.grad = backward(model, pass, logit_grad, Tensor());
  return out;
}

Tensor flatten_params(const Model& model) {
  std::vector<double> flat;
  flat.reserve(model.parameter_count());
  auto append = [&flat](const Tensor& t) {
    flat.insert(flat.end(), t.data().begin(), t.data().end());
  };
  for (const auto& layer : model.encoder) {
    append(layer.weights);
    append(layer.bias);
  }
  append(model.logit_matrix);
  return Tensor::vector(std::move(flat));
}

Model unflatten_params(const Model& like, const Tensor& flat) {
  if (flat.size() != like.parameter_count()) {
    throw ShapeError(fmt::format("flat vector has {} values, model needs {}",
                                 flat.size(), like.parameter_count()));
  }
  Model m = like;
  std::size_t offset = 0;
  auto take = [&](Tensor& t) {
    std::copy_n(flat.data().begin() + static_cast<std::ptrdiff_t>(offset),
                t.size(), t.values().begin());
    offset += t.size();
  };
  for (auto& layer : m.encoder) {
    take(layer.weights);
    take(layer.bias);
  }
  take(m.logit_matrix);
  return m;
}

}  // namespace fedsvm
