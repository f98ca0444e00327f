#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "baccae/ccae.hpp"
#include "baccae/cluster.hpp"

namespace baccae::eval {

// Half-open age buckets [origin + i*interval, origin + (i+1)*interval); ages
// past the last bucket clamp into it.
struct IntervalRule {
    int origin_months = 24;
    int interval_months = 48;
    int num_classes = 4;

    double midpoint(int cls) const { return origin_months + (cls + 0.5) * interval_months; }
    std::string class_name(int cls) const;
};

int assign_interval_label(int age_months, const IntervalRule& rule);

struct ClusterSummary {
    int cluster = 0;
    std::vector<long long> counts;  // per class
    long long size = 0;
    int dominated = -1;  // -1 for an empty cluster
    double accuracy = 0.0;
};

struct EvaluationReport {
    std::vector<ClusterSummary> clusters;
    long long n = 0;
    long long correct = 0;
    double overall_accuracy = 0.0;
};

// Dominated label per cluster is the argmax class count, ties to the lower class.
EvaluationReport report_from_counts(const std::vector<std::vector<long long>>& counts);

EvaluationReport dominant_label_report(std::span<const int> cluster_labels, std::span<const int> true_labels,
                                       int num_clusters, int num_classes);
EvaluationReport dominant_label_report(const cluster::ClusterAssignment& assignment, std::span<const int> true_labels,
                                       int num_classes);

struct MAEReport {
    double mae_months = 0.0;
    std::string predictor = "midpoint of the cluster's dominated interval";
};

MAEReport mae_report(std::span<const int> cluster_labels, std::span<const int> true_ages_months, int num_clusters,
                     const IntervalRule& rule);
MAEReport mae_report(const cluster::ClusterAssignment& assignment, std::span<const int> true_ages_months,
                     const IntervalRule& rule);

// Bare cluster x class count matrix: one row per cluster, comma-separated
// integers; a non-numeric first line is treated as a header and skipped, as is
// a leading cluster-index column when the header names it "cluster" or "group".
std::vector<std::vector<long long>> load_count_matrix(const std::filesystem::path& path);

// Sample ages keyed by id, aligned to a feature matrix's row order.
struct LabelledSamples {
    std::vector<int> ages;
    std::vector<int> classes;
};
LabelledSamples align_labels(std::span<const std::string> sample_ids, const std::map<std::string, int>& age_by_id,
                             const IntervalRule& rule);

struct SetResult {
    std::vector<int> region_set;
    double accuracy = 0.0;
    double inertia = 0.0;
    EvaluationReport report;
};

// kmeans + dominant-label report on each single region.
std::vector<SetResult> region_sweep(std::span<const ccae::LatentVector> latents, std::span<const int> regions,
                                    const cluster::KMeansConfig& kcfg, const std::map<std::string, int>& age_by_id,
                                    const IntervalRule& rule);

// concat_latents + kmeans + dominant-label report per region set.
std::vector<SetResult> combination_eval(std::span<const ccae::LatentVector> latents,
                                        std::span<const std::vector<int>> region_sets,
                                        const cluster::KMeansConfig& kcfg, const std::map<std::string, int>& age_by_id,
                                        const IntervalRule& rule);

struct KSweepRow {
    int k = 0;
    double accuracy = 0.0;
    double mae_months = 0.0;
};

std::vector<KSweepRow> k_sweep(const cluster::FeatureMatrix& fm, std::span<const int> k_values,
                               const cluster::KMeansConfig& base, const std::map<std::string, int>& age_by_id,
                               const IntervalRule& rule);

// Flat CSV mirror of the per-cluster table.
void save_report_csv(const std::filesystem::path& path, const EvaluationReport& report, const IntervalRule& rule);

}  // namespace baccae::eval
