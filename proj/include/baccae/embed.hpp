#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "baccae/cluster.hpp"

namespace baccae::embed {

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch_iter = 250;
    std::uint64_t seed = 0;
};

// Dense symmetric n x n joint probabilities, row-major.
struct Affinities {
    std::size_t n = 0;
    std::vector<double> p;
    // Rows whose bandwidth search ended without hitting the entropy target.
    std::size_t unconverged_rows = 0;

    double at(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

// Per-row Gaussian bandwidth by bisection on beta in [1e-12, 1e12] (at most 50
// steps, entropy tolerance 1e-5), then P = (P + P^T) / 2n.
Affinities perplexity_affinities(const cluster::FeatureMatrix& fm, double perplexity);

struct Embedding2D {
    std::vector<double> points;  // n x 2
    double kl_initial = 0.0;
    double kl_final = 0.0;

    std::size_t size() const { return points.size() / 2; }
};

// Exact-gradient t-SNE with Student-t output kernel.
Embedding2D tsne(const cluster::FeatureMatrix& fm, const TsneConfig& cfg);

// KL(P || Q) for an embedding.
double kl_divergence(const Affinities& p, std::span<const double> points);

// Writes <stem>.csv (sample_id,x,y,label) and <stem>.svg. An empty label list
// draws every point in one colour.
void emit_scatter(const Embedding2D& embedding, std::span<const std::string> sample_ids,
                  std::span<const int> labels, std::span<const std::string> label_names,
                  const std::filesystem::path& csv_path, const std::filesystem::path& svg_path);

}  // namespace baccae::embed
