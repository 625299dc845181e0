#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "pyramid/core.hpp"

namespace pyramid {

struct SimOutput {
  Dataset dataset;
  std::vector<IntMatrix> latents_alpha;  // layer 1 first; each n x K_m
  std::vector<int> latents_z;            // 1..B
  std::optional<TwoLayerParams> truth;
};

/// Per subject: z ~ tau, alpha_k ~ Bernoulli(eta_{k,z}), y_j from the
/// multinomial-logit conditional. Subject i draws from its own stream, so the
/// output does not depend on `jobs`.
SimOutput simulate_two_layer(const TwoLayerParams& params, int n, std::uint64_t seed, int jobs = 1);

/// Ground truth of the reference simulation design: p=20, d=4, K=4, B=2.
TwoLayerParams paper_sim_truth();

/// Latent-layer link: logistic main effects.
struct MainEffectLink {
  Vector intercept;  // K_{m-1}
  Matrix weight;     // K_{m-1} x K_m, zero where the graph has no edge
};

/// Latent-layer link: noisy Boolean OR of the parents.
struct BooleanOrLink {
  Vector theta0;  // P(child = 1) when no parent is active
  Vector theta1;  // P(child = 1) when some parent is active
};

using LayerModel = std::variant<MainEffectLink, BooleanOrLink>;

struct DeepLayer {
  Vector tau;  // B
  Matrix eta;  // K_{D-1} x B
};

/// Top-down ancestral sampling through a pyramid of depth D = graphs.size() + 1.
/// `bottom` supplies cardinalities, beta0 and beta for the observed layer
/// (its graph must equal graphs[0]; its tau/eta are ignored). layer_models[m]
/// links layer m+1 to layer m+2 through graphs[m+1].
SimOutput simulate_pyramid(const std::vector<GraphicalMatrix>& graphs, const TwoLayerParams& bottom,
                           const std::vector<LayerModel>& layer_models, const DeepLayer& deep, int n,
                           std::uint64_t seed, int jobs = 1);

double logistic(double x);

}  // namespace pyramid
