#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cgid/numeric/matrix.hpp"

namespace cgid {

enum class Activation { tanh, relu, identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

// Fully connected layer y = x·Wᵀ + b, weight stored out × in.
struct Linear {
  DenseMatrix weight;
  std::vector<double> bias;

  std::size_t in_features() const noexcept { return weight.cols(); }
  std::size_t out_features() const noexcept { return weight.rows(); }

  // Uniform in [-1/sqrt(in), 1/sqrt(in)] for both weight and bias.
  static Linear uniform_init(std::size_t in, std::size_t out, std::uint64_t seed);
  static Linear zeros(std::size_t in, std::size_t out);

  DenseMatrix forward(const DenseMatrix& x) const;

  bool operator==(const Linear&) const = default;
};

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t feature_dim = 32;
  std::size_t projection_dim = 16;
  Activation activation = Activation::tanh;
};

// Feed-forward encoder f (hidden layers + linear output to d_f) and projection head g (d_f -> d_z).
struct EncoderParams {
  std::vector<Linear> hidden;
  Linear output;
  Linear projection;
  Activation activation = Activation::tanh;
  // One flag per layer in the order hidden..., output, projection. Empty means all trainable.
  std::vector<bool> frozen;
  // Bumped on every parameter update; forward caches remember the version they were built from.
  std::uint64_t version = 0;

  static EncoderParams init(const EncoderConfig& config, std::uint64_t seed);
  static EncoderParams zeros_like(const EncoderParams& shape);

  std::size_t input_dim() const noexcept;
  std::size_t feature_dim() const noexcept { return output.out_features(); }
  std::size_t projection_dim() const noexcept { return projection.out_features(); }
  std::size_t layer_count() const noexcept { return hidden.size() + 2; }
  bool is_frozen(std::size_t layer) const noexcept { return layer < frozen.size() && frozen[layer]; }

  Linear& layer(std::size_t i);
  const Linear& layer(std::size_t i) const;

  // Same parameter values and shapes; ignores the version counter.
  bool same_values(const EncoderParams& other) const;
};

struct EncoderCache {
  DenseMatrix input;
  std::vector<DenseMatrix> activations;  // per hidden layer, post-activation and pre-dropout
  std::vector<DenseMatrix> masks;        // per hidden layer, scaled inverted-dropout masks (empty if none)
  DenseMatrix features;
  std::uint64_t version = 0;
  const EncoderParams* owner = nullptr;
};

struct EncoderOutput {
  DenseMatrix features;
  DenseMatrix projections;
  EncoderCache cache;
};

EncoderOutput encoder_forward(const EncoderParams& params, const DenseMatrix& batch, double dropout_prob,
                              std::uint64_t rng_seed);

// Features only; no cache, no dropout.
DenseMatrix encoder_features(const EncoderParams& params, const DenseMatrix& batch);

// Gradients shaped like `params`. Either upstream matrix may be empty, meaning zero.
// Frozen layers receive zero gradients.
EncoderParams encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                               const DenseMatrix& grad_features, const DenseMatrix& grad_projections);

void add_scaled(EncoderParams& into, const EncoderParams& from, double scale = 1.0);

// Views over parameter values in a stable layer order. With `trainable_only`, layers frozen in
// `params` are skipped; gradients built by encoder_backward carry the same mask.
std::vector<std::span<double>> parameter_spans(EncoderParams& params, bool trainable_only = false);
std::vector<std::span<const double>> parameter_spans(const EncoderParams& params, bool trainable_only = false);
std::vector<std::span<double>> parameter_spans(Linear& layer);
std::vector<std::span<const double>> parameter_spans(const Linear& layer);

}  // namespace cgid
