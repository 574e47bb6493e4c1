#include "cgid/numeric/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"

namespace cgid {
namespace {

double activate(Activation a, double x) {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::identity: return x;
  }
  return x;
}

// Derivative expressed through the activation output y = act(x).
double activate_grad(Activation a, double y) {
  switch (a) {
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

void accumulate_linear_grad(Linear& grad, const DenseMatrix& input, const DenseMatrix& upstream) {
  grad.weight = matmul_at(upstream, input);
  grad.bias = column_sums(upstream);
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "tanh";
}

Linear Linear::uniform_init(std::size_t in, std::size_t out, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l{DenseMatrix(out, in), std::vector<double>(out)};
  for (double& w : l.weight.values()) w = uniform(rng, -bound, bound);
  for (double& b : l.bias) b = uniform(rng, -bound, bound);
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out) { return Linear{DenseMatrix(out, in), std::vector<double>(out)}; }

DenseMatrix Linear::forward(const DenseMatrix& x) const {
  if (x.cols() != in_features()) {
    throw ShapeError("Linear: input has " + std::to_string(x.cols()) + " columns, layer expects " +
                     std::to_string(in_features()));
  }
  DenseMatrix y = matmul_bt(x, weight);
  add_row_vector(y, bias);
  return y;
}

EncoderParams EncoderParams::init(const EncoderConfig& config, std::uint64_t seed) {
  if (config.input_dim == 0 || config.feature_dim == 0 || config.projection_dim == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  EncoderParams p;
  p.activation = config.activation;
  std::size_t in = config.input_dim;
  std::uint64_t layer = 0;
  for (std::size_t width : config.hidden) {
    if (width == 0) throw ConfigError("hidden width must be positive");
    p.hidden.push_back(Linear::uniform_init(in, width, derive_seed(seed, tag("layer"), layer++)));
    in = width;
  }
  p.output = Linear::uniform_init(in, config.feature_dim, derive_seed(seed, tag("layer"), layer++));
  p.projection = Linear::uniform_init(config.feature_dim, config.projection_dim, derive_seed(seed, tag("projection")));
  return p;
}

EncoderParams EncoderParams::zeros_like(const EncoderParams& shape) {
  EncoderParams p;
  p.activation = shape.activation;
  p.frozen = shape.frozen;
  for (const auto& l : shape.hidden) p.hidden.push_back(Linear::zeros(l.in_features(), l.out_features()));
  p.output = Linear::zeros(shape.output.in_features(), shape.output.out_features());
  p.projection = Linear::zeros(shape.projection.in_features(), shape.projection.out_features());
  return p;
}

std::size_t EncoderParams::input_dim() const noexcept {
  return hidden.empty() ? output.in_features() : hidden.front().in_features();
}

Linear& EncoderParams::layer(std::size_t i) {
  if (i < hidden.size()) return hidden[i];
  if (i == hidden.size()) return output;
  if (i == hidden.size() + 1) return projection;
  throw ContractError("EncoderParams::layer: index out of range");
}

const Linear& EncoderParams::layer(std::size_t i) const { return const_cast<EncoderParams&>(*this).layer(i); }

bool EncoderParams::same_values(const EncoderParams& other) const {
  return hidden == other.hidden && output == other.output && projection == other.projection &&
         activation == other.activation;
}

EncoderOutput encoder_forward(const EncoderParams& params, const DenseMatrix& batch, double dropout_prob,
                              std::uint64_t rng_seed) {
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw ContractError("dropout probability must be in [0, 1)");
  if (batch.cols() != params.input_dim()) {
    throw ShapeError("encoder_forward: batch has " + std::to_string(batch.cols()) + " columns, encoder expects " +
                     std::to_string(params.input_dim()));
  }
  EncoderOutput out;
  out.cache.input = batch;
  out.cache.version = params.version;
  out.cache.owner = &params;

  Rng rng(rng_seed);
  const double keep_scale = 1.0 / (1.0 - dropout_prob);
  DenseMatrix h = batch;
  for (const Linear& layer : params.hidden) {
    DenseMatrix a = layer.forward(h);
    for (double& x : a.values()) x = activate(params.activation, x);
    DenseMatrix mask;
    h = a;
    if (dropout_prob > 0.0) {
      mask = DenseMatrix(a.rows(), a.cols());
      auto m = mask.values();
      auto hv = h.values();
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = uniform01(rng) < dropout_prob ? 0.0 : keep_scale;
        hv[i] *= m[i];
      }
    }
    out.cache.activations.push_back(std::move(a));
    out.cache.masks.push_back(std::move(mask));
  }
  out.features = params.output.forward(h);
  out.projections = params.projection.forward(out.features);
  out.cache.features = out.features;
  return out;
}

DenseMatrix encoder_features(const EncoderParams& params, const DenseMatrix& batch) {
  if (batch.cols() != params.input_dim()) throw ShapeError("encoder_features: input dimension mismatch");
  DenseMatrix h = batch;
  for (const Linear& layer : params.hidden) {
    h = layer.forward(h);
    for (double& x : h.values()) x = activate(params.activation, x);
  }
  return params.output.forward(h);
}

EncoderParams encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                               const DenseMatrix& grad_features, const DenseMatrix& grad_projections) {
  if (cache.owner != &params || cache.version != params.version) {
    throw ContractError("encoder_backward: cache was not produced by a forward pass of these parameters");
  }
  const std::size_t n = cache.input.rows();
  auto check = [&](const DenseMatrix& g, std::size_t cols, const char* what) {
    if (!g.empty() && (g.rows() != n || g.cols() != cols)) {
      throw ShapeError(std::string("encoder_backward: ") + what + " gradient shape mismatch");
    }
  };
  check(grad_features, params.feature_dim(), "feature");
  check(grad_projections, params.projection_dim(), "projection");

  EncoderParams grads = EncoderParams::zeros_like(params);
  DenseMatrix g_feat = grad_features.empty() ? DenseMatrix(n, params.feature_dim()) : grad_features;
  if (!grad_projections.empty()) {
    accumulate_linear_grad(grads.projection, cache.features, grad_projections);
    add_scaled(g_feat, matmul(grad_projections, params.projection.weight));
  }

  const std::size_t depth = params.hidden.size();
  const DenseMatrix& last_input = [&]() -> const DenseMatrix& {
    return depth == 0 ? cache.input : cache.activations.back();
  }();
  // The output layer consumes the dropped-out activation.
  DenseMatrix output_input = last_input;
  if (depth > 0 && !cache.masks.back().empty()) {
    auto v = output_input.values();
    auto m = cache.masks.back().values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= m[i];
  }
  accumulate_linear_grad(grads.output, output_input, g_feat);
  DenseMatrix g = matmul(g_feat, params.output.weight);

  for (std::size_t li = depth; li-- > 0;) {
    const DenseMatrix& a = cache.activations[li];
    const DenseMatrix& mask = cache.masks[li];
    auto gv = g.values();
    auto av = a.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      if (!mask.empty()) gv[i] *= mask.values()[i];
      gv[i] *= activate_grad(params.activation, av[i]);
    }
    DenseMatrix layer_input = li == 0 ? cache.input : cache.activations[li - 1];
    if (li > 0 && !cache.masks[li - 1].empty()) {
      auto v = layer_input.values();
      auto m = cache.masks[li - 1].values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] *= m[i];
    }
    accumulate_linear_grad(grads.hidden[li], layer_input, g);
    if (li > 0) g = matmul(g, params.hidden[li].weight);
  }

  for (std::size_t i = 0; i < grads.layer_count(); ++i) {
    if (!params.is_frozen(i)) continue;
    Linear& l = grads.layer(i);
    l.weight.fill(0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return grads;
}

void add_scaled(EncoderParams& into, const EncoderParams& from, double scale) {
  if (into.layer_count() != from.layer_count()) throw ShapeError("add_scaled: encoder depth mismatch");
  for (std::size_t i = 0; i < into.layer_count(); ++i) {
    Linear& dst = into.layer(i);
    const Linear& src = from.layer(i);
    add_scaled(dst.weight, src.weight, scale);
    if (dst.bias.size() != src.bias.size()) throw ShapeError("add_scaled: bias length mismatch");
    for (std::size_t j = 0; j < dst.bias.size(); ++j) dst.bias[j] += scale * src.bias[j];
  }
}

std::vector<std::span<double>> parameter_spans(Linear& layer) { return {layer.weight.values(), layer.bias}; }

std::vector<std::span<const double>> parameter_spans(const Linear& layer) {
  return {layer.weight.values(), std::span<const double>(layer.bias)};
}

std::vector<std::span<double>> parameter_spans(EncoderParams& params, bool trainable_only) {
  std::vector<std::span<double>> out;
  for (std::size_t i = 0; i < params.layer_count(); ++i) {
    if (trainable_only && params.is_frozen(i)) continue;
    for (auto s : parameter_spans(params.layer(i))) out.push_back(s);
  }
  return out;
}

std::vector<std::span<const double>> parameter_spans(const EncoderParams& params, bool trainable_only) {
  std::vector<std::span<const double>> out;
  for (std::size_t i = 0; i < params.layer_count(); ++i) {
    if (trainable_only && params.is_frozen(i)) continue;
    for (auto s : parameter_spans(params.layer(i))) out.push_back(s);
  }
  return out;
}

}  // namespace cgid
