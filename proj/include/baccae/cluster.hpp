#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "baccae/ccae.hpp"

namespace baccae::cluster {

// Row-major n x d matrix of per-sample features.
struct FeatureMatrix {
    std::vector<std::string> sample_ids;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    std::vector<int> region_set;

    FeatureMatrix() = default;
    FeatureMatrix(std::vector<std::string> ids, std::size_t d, std::vector<double> values);

    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
};

// Concatenates each sample's latents in ascending region order; rows are
// sorted by sample id. Missing (sample, region) pairs throw, listing every gap.
FeatureMatrix concat_latents(std::span<const ccae::LatentVector> latents, std::vector<int> region_set);

// Per-column z-scoring; zero-variance columns are centred only.
FeatureMatrix standardize(const FeatureMatrix& fm);

struct KMeansConfig {
    int k = 16;
    int max_iters = 300;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    int restarts = 10;
    bool standardize = false;
};

struct ClusterAssignment {
    std::vector<int> labels;
    std::vector<double> centroids;  // k x d, row-major
    std::size_t k = 0;
    std::size_t dims = 0;
    double inertia = 0.0;
    int iterations_run = 0;
    int restarts = 0;
    int best_restart = 0;
    // Inertia after each assignment step of the winning restart.
    std::vector<double> inertia_trace;

    std::span<const double> centroid(std::size_t c) const { return {centroids.data() + c * dims, dims}; }
};

// Lloyd iterations from k-means++ seeding; restart r uses seed + r and the
// lowest-inertia run wins (earliest on ties). Empty clusters are re-seeded with
// the point farthest from its centroid; distance ties go to the lowest index.
ClusterAssignment kmeans(const FeatureMatrix& fm, const KMeansConfig& cfg);

double squared_distance(std::span<const double> a, std::span<const double> b);

// CSV sample_id,cluster.
void save_assignment(const std::filesystem::path& path, const FeatureMatrix& fm, const ClusterAssignment& a);

struct AssignmentFile {
    std::vector<std::string> sample_ids;
    std::vector<int> clusters;
};
AssignmentFile load_assignment(const std::filesystem::path& path);

}  // namespace baccae::cluster
