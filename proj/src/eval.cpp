#include "baccae/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"

namespace baccae::eval {

std::string IntervalRule::class_name(int cls) const {
    const int lo = origin_months + cls * interval_months;
    return std::to_string(lo) + "-" + std::to_string(lo + interval_months);
}

int assign_interval_label(int age_months, const IntervalRule& rule) {
    if (rule.interval_months <= 0 || rule.num_classes <= 0) {
        throw Error(ErrorKind::Parameter, "interval rule needs positive interval and class count");
    }
    if (age_months < rule.origin_months) {
        throw Error(ErrorKind::Range, "age " + std::to_string(age_months) + " months is below the rule origin " +
                                          std::to_string(rule.origin_months));
    }
    return std::min((age_months - rule.origin_months) / rule.interval_months, rule.num_classes - 1);
}

EvaluationReport report_from_counts(const std::vector<std::vector<long long>>& counts) {
    EvaluationReport report;
    const std::size_t classes = counts.empty() ? 0 : counts.front().size();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const auto& row = counts[c];
        if (row.size() != classes) throw Error(ErrorKind::Dimension, "count matrix rows have different widths");
        ClusterSummary s;
        s.cluster = static_cast<int>(c);
        s.counts = row;
        long long best = -1;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] < 0) throw Error(ErrorKind::Range, "negative count in cluster " + std::to_string(c));
            s.size += row[j];
            if (row[j] > best) {
                best = row[j];
                s.dominated = static_cast<int>(j);
            }
        }
        if (s.size == 0) {
            s.dominated = -1;
        } else {
            s.accuracy = static_cast<double>(best) / static_cast<double>(s.size);
            report.correct += best;
        }
        report.n += s.size;
        report.clusters.push_back(std::move(s));
    }
    report.overall_accuracy = report.n > 0 ? static_cast<double>(report.correct) / static_cast<double>(report.n) : 0.0;
    return report;
}

namespace {

std::vector<std::vector<long long>> tally(std::span<const int> cluster_labels, std::span<const int> true_labels,
                                          int num_clusters, int num_classes) {
    if (cluster_labels.size() != true_labels.size()) {
        throw Error(ErrorKind::Usage, "cluster labels (" + std::to_string(cluster_labels.size()) +
                                          ") and true labels (" + std::to_string(true_labels.size()) +
                                          ") differ in length");
    }
    std::vector<std::vector<long long>> counts(static_cast<std::size_t>(num_clusters),
                                               std::vector<long long>(static_cast<std::size_t>(num_classes), 0));
    for (std::size_t i = 0; i < cluster_labels.size(); ++i) {
        const int c = cluster_labels[i], y = true_labels[i];
        if (c < 0 || c >= num_clusters) throw Error(ErrorKind::Range, "cluster index out of range");
        if (y < 0 || y >= num_classes) throw Error(ErrorKind::Range, "class index out of range");
        ++counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(y)];
    }
    return counts;
}

}  // namespace

EvaluationReport dominant_label_report(std::span<const int> cluster_labels, std::span<const int> true_labels,
                                       int num_clusters, int num_classes) {
    return report_from_counts(tally(cluster_labels, true_labels, num_clusters, num_classes));
}

EvaluationReport dominant_label_report(const cluster::ClusterAssignment& assignment, std::span<const int> true_labels,
                                       int num_classes) {
    return dominant_label_report(assignment.labels, true_labels, static_cast<int>(assignment.k), num_classes);
}

MAEReport mae_report(std::span<const int> cluster_labels, std::span<const int> true_ages_months, int num_clusters,
                     const IntervalRule& rule) {
    if (cluster_labels.size() != true_ages_months.size()) {
        throw Error(ErrorKind::Usage, "cluster labels and ages differ in length");
    }
    std::vector<int> classes;
    classes.reserve(true_ages_months.size());
    for (int age : true_ages_months) classes.push_back(assign_interval_label(age, rule));
    const auto report = dominant_label_report(cluster_labels, classes, num_clusters, rule.num_classes);
    MAEReport mae;
    if (cluster_labels.empty()) return mae;
    double total = 0.0;
    for (std::size_t i = 0; i < cluster_labels.size(); ++i) {
        const int dom = report.clusters[static_cast<std::size_t>(cluster_labels[i])].dominated;
        total += std::abs(rule.midpoint(dom) - true_ages_months[i]);
    }
    mae.mae_months = total / static_cast<double>(cluster_labels.size());
    return mae;
}

MAEReport mae_report(const cluster::ClusterAssignment& assignment, std::span<const int> true_ages_months,
                     const IntervalRule& rule) {
    return mae_report(assignment.labels, true_ages_months, static_cast<int>(assignment.k), rule);
}

std::vector<std::vector<long long>> load_count_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::vector<long long>> rows;
    std::string line;
    std::size_t line_no = 0;
    bool skip_first_column = false;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (csv::trim(line).empty()) continue;
        auto fields = csv::split(line);
        if (first) {
            first = false;
            long long probe = 0;
            const auto& f0 = fields.front();
            const auto res = std::from_chars(f0.data(), f0.data() + f0.size(), probe);
            if (res.ec != std::errc() || res.ptr != f0.data() + f0.size()) {
                skip_first_column = f0 == "cluster" || f0 == "group";
                continue;
            }
        }
        std::vector<long long> row;
        for (std::size_t i = skip_first_column ? 1 : 0; i < fields.size(); ++i) {
            long long v = 0;
            const auto& f = fields[i];
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size() || f.empty() || v < 0) {
                throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": invalid count '" +
                                                  f + "'");
            }
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": row width differs");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorKind::Parse, path.string() + ": no count rows");
    return rows;
}

LabelledSamples align_labels(std::span<const std::string> sample_ids, const std::map<std::string, int>& age_by_id,
                             const IntervalRule& rule) {
    LabelledSamples out;
    std::vector<std::string> missing;
    for (const auto& id : sample_ids) {
        const auto it = age_by_id.find(id);
        if (it == age_by_id.end()) {
            missing.push_back(id);
            continue;
        }
        out.ages.push_back(it->second);
        out.classes.push_back(assign_interval_label(it->second, rule));
    }
    if (!missing.empty()) {
        std::string msg = "no age label for " + std::to_string(missing.size()) + " sample(s):";
        for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
        throw Error(ErrorKind::Completeness, msg);
    }
    return out;
}

namespace {

SetResult evaluate_set(std::span<const ccae::LatentVector> latents, std::vector<int> set,
                       const cluster::KMeansConfig& kcfg, const std::map<std::string, int>& age_by_id,
                       const IntervalRule& rule) {
    const auto fm = cluster::concat_latents(latents, set);
    const auto labels = align_labels(fm.sample_ids, age_by_id, rule);
    const auto assignment = cluster::kmeans(fm, kcfg);
    SetResult r;
    r.region_set = fm.region_set;
    r.report = dominant_label_report(assignment, labels.classes, rule.num_classes);
    r.accuracy = r.report.overall_accuracy;
    r.inertia = assignment.inertia;
    return r;
}

}  // namespace

std::vector<SetResult> region_sweep(std::span<const ccae::LatentVector> latents, std::span<const int> regions,
                                    const cluster::KMeansConfig& kcfg, const std::map<std::string, int>& age_by_id,
                                    const IntervalRule& rule) {
    std::vector<SetResult> out;
    for (int r : regions) out.push_back(evaluate_set(latents, {r}, kcfg, age_by_id, rule));
    return out;
}

std::vector<SetResult> combination_eval(std::span<const ccae::LatentVector> latents,
                                        std::span<const std::vector<int>> region_sets,
                                        const cluster::KMeansConfig& kcfg, const std::map<std::string, int>& age_by_id,
                                        const IntervalRule& rule) {
    std::vector<SetResult> out;
    for (const auto& set : region_sets) out.push_back(evaluate_set(latents, set, kcfg, age_by_id, rule));
    return out;
}

std::vector<KSweepRow> k_sweep(const cluster::FeatureMatrix& fm, std::span<const int> k_values,
                               const cluster::KMeansConfig& base, const std::map<std::string, int>& age_by_id,
                               const IntervalRule& rule) {
    const auto labels = align_labels(fm.sample_ids, age_by_id, rule);
    std::vector<KSweepRow> out;
    for (int k : k_values) {
        auto cfg = base;
        cfg.k = k;
        const auto a = cluster::kmeans(fm, cfg);
        out.push_back({k, dominant_label_report(a, labels.classes, rule.num_classes).overall_accuracy,
                       mae_report(a, labels.ages, rule).mae_months});
    }
    return out;
}

void save_report_csv(const std::filesystem::path& path, const EvaluationReport& report, const IntervalRule& rule) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    const std::size_t classes = report.clusters.empty() ? 0 : report.clusters.front().counts.size();
    out << "cluster";
    for (std::size_t j = 0; j < classes; ++j) out << ",n_" << rule.class_name(static_cast<int>(j));
    out << ",size,dominated,accuracy\n";
    for (const auto& c : report.clusters) {
        out << c.cluster;
        for (auto v : c.counts) out << ',' << v;
        out << ',' << c.size << ',' << (c.dominated >= 0 ? rule.class_name(c.dominated) : "") << ','
            << csv::format_double(c.accuracy) << '\n';
    }
}

}  // namespace baccae::eval
