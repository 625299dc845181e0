#include "pyramid/simgen.hpp"

#include <cmath>
#include <string>

#include "pyramid/rng.hpp"

namespace pyramid {

double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

namespace {

void check_probability_vector(const Vector& v, const char* what) {
  if (!((v.array() >= 0.0) && (v.array() <= 1.0)).all())
    throw InputError(std::string(what) + " must lie in [0,1]");
}

}  // namespace

SimOutput simulate_pyramid(const std::vector<GraphicalMatrix>& graphs, const TwoLayerParams& bottom,
                           const std::vector<LayerModel>& layer_models, const DeepLayer& deep, int n,
                           std::uint64_t seed, int jobs) {
  if (graphs.empty()) throw InputError("need at least one graphical matrix");
  if (n < 1) throw InputError("n must be positive");
  for (std::size_t m = 1; m < graphs.size(); ++m)
    if (graphs[m].rows() != graphs[m - 1].cols())
      throw InputError("graph chain dimension mismatch at layer " + std::to_string(m + 1));
  if (layer_models.size() + 1 != graphs.size())
    throw InputError("need one layer model per latent-to-latent graph");
  if (bottom.graph.entries != graphs[0].entries)
    throw InputError("bottom-layer parameters use a different graph");
  const int D1 = static_cast<int>(graphs.size());  // number of binary latent layers
  const int top_K = graphs.back().cols();
  if (deep.eta.rows() != top_K || deep.eta.cols() != deep.tau.size())
    throw InputError("deep-layer eta must be K_top x B");
  for (std::size_t m = 0; m < layer_models.size(); ++m) {
    const int rows = graphs[m + 1].rows();
    const int cols = graphs[m + 1].cols();
    if (const auto* me = std::get_if<MainEffectLink>(&layer_models[m])) {
      if (me->intercept.size() != rows || me->weight.rows() != rows || me->weight.cols() != cols)
        throw InputError("main-effect link has wrong dimensions");
    } else {
      const auto& bo = std::get<BooleanOrLink>(layer_models[m]);
      if (bo.theta0.size() != rows || bo.theta1.size() != rows)
        throw InputError("Boolean link has wrong dimensions");
      check_probability_vector(bo.theta0, "theta0");
      check_probability_vector(bo.theta1, "theta1");
    }
  }

  const int p = bottom.p();
  IntMatrix y(n, p);
  std::vector<IntMatrix> alphas;
  for (const auto& g : graphs) alphas.emplace_back(n, g.cols());
  std::vector<int> z(n);

#pragma omp parallel for num_threads(jobs) schedule(static)
  for (int i = 0; i < n; ++i) {
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(i)});
    const int zi = categorical_draw(rng, deep.tau);
    z[i] = zi + 1;
    for (int k = 0; k < top_K; ++k)
      alphas[D1 - 1](i, k) = bernoulli_draw(rng, deep.eta(k, zi));
    for (int m = D1 - 2; m >= 0; --m) {
      const auto& g = graphs[m + 1];
      const auto& parent = alphas[m + 1];
      for (int k = 0; k < g.rows(); ++k) {
        double prob;
        if (const auto* me = std::get_if<MainEffectLink>(&layer_models[m])) {
          double lin = me->intercept(k);
          for (int kk = 0; kk < g.cols(); ++kk)
            if (g(k, kk) && parent(i, kk)) lin += me->weight(k, kk);
          prob = logistic(lin);
        } else {
          const auto& bo = std::get<BooleanOrLink>(layer_models[m]);
          bool any = false;
          for (int kk = 0; kk < g.cols() && !any; ++kk) any = g(k, kk) && parent(i, kk);
          prob = any ? bo.theta1(k) : bo.theta0(k);
        }
        alphas[m](i, k) = bernoulli_draw(rng, prob);
      }
    }
    std::vector<int> alpha(graphs[0].cols());
    for (int k = 0; k < graphs[0].cols(); ++k) alpha[k] = alphas[0](i, k);
    for (int j = 0; j < p; ++j)
      y(i, j) = categorical_draw(rng, two_layer_conditional(bottom, j, alpha)) + 1;
  }

  SimOutput out{Dataset::make(std::move(y), bottom.cardinalities), std::move(alphas), std::move(z),
                std::nullopt};
  return out;
}

SimOutput simulate_two_layer(const TwoLayerParams& params, int n, std::uint64_t seed, int jobs) {
  validate(params);
  SimOutput out = simulate_pyramid({params.graph}, params, {}, DeepLayer{params.tau, params.eta}, n,
                                   seed, jobs);
  out.truth = params;
  return out;
}

TwoLayerParams paper_sim_truth() {
  constexpr int p = 20, K = 4, d = 4, B = 2;
  // The published listing has 21 rows for p=20 with "1001" repeated; the
  // repeat is dropped.
  const char* rows[p] = {"1000", "0100", "0010", "0001", "1000", "0100", "0010",
                         "0001", "1000", "0100", "0010", "0001", "1100", "0110",
                         "0011", "1001", "1010", "0101", "1110", "0111"};
  IntMatrix g(p, K);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < K; ++k) g(j, k) = rows[j][k] == '1';
  TwoLayerParams t;
  t.graph = GraphicalMatrix::make(g);
  t.cardinalities.assign(p, d);
  t.beta0.resize(p, d - 1);
  for (int j = 0; j < p; ++j) t.beta0.row(j) << -3.0, -2.0, -1.0;
  t.beta.assign(d - 1, Matrix::Zero(p, K));
  for (int j = 0; j < p; ++j) {
    const int parents = g.row(j).sum();
    const double w = parents == 1 ? 3.0 : 2.0;
    for (int c = 0; c < d - 1; ++c)
      for (int k = 0; k < K; ++k)
        if (g(j, k)) t.beta[c](j, k) = w;
  }
  t.tau = Vector::Constant(B, 1.0 / B);
  t.eta.resize(K, B);
  t.eta.col(0).setConstant(0.8);
  t.eta.col(1).setConstant(0.2);
  return t;
}

}  // namespace pyramid
