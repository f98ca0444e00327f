#include "baccae/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"
#include "baccae/rng.hpp"

namespace baccae::cluster {

FeatureMatrix::FeatureMatrix(std::vector<std::string> ids, std::size_t d, std::vector<double> values)
    : sample_ids(std::move(ids)), rows(sample_ids.size()), cols(d), data(std::move(values)) {
    if (data.size() != rows * cols) throw Error(ErrorKind::Dimension, "feature data does not match n x d");
}

FeatureMatrix concat_latents(std::span<const ccae::LatentVector> latents, std::vector<int> region_set) {
    std::sort(region_set.begin(), region_set.end());
    region_set.erase(std::unique(region_set.begin(), region_set.end()), region_set.end());
    if (region_set.empty()) throw Error(ErrorKind::Usage, "region set is empty");

    std::map<std::pair<std::string, int>, const ccae::LatentVector*> by_key;
    std::set<std::string> samples;
    std::map<int, std::size_t> dims;
    for (const auto& lv : latents) {
        if (!std::binary_search(region_set.begin(), region_set.end(), lv.region_id)) continue;
        if (!by_key.emplace(std::make_pair(lv.sample_id, lv.region_id), &lv).second) {
            throw Error(ErrorKind::Usage, "duplicate latent for sample '" + lv.sample_id + "' region " +
                                              std::to_string(lv.region_id));
        }
        samples.insert(lv.sample_id);
        const auto [it, inserted] = dims.emplace(lv.region_id, lv.z.size());
        if (!inserted && it->second != lv.z.size()) {
            throw Error(ErrorKind::Dimension, "region " + std::to_string(lv.region_id) + " has mixed latent sizes");
        }
    }

    std::vector<std::string> gaps;
    for (int r : region_set) {
        if (!dims.contains(r)) gaps.push_back("region " + std::to_string(r) + " (no latents)");
    }
    for (const auto& s : samples) {
        for (int r : region_set) {
            if (dims.contains(r) && !by_key.contains({s, r})) gaps.push_back(s + "/r" + std::to_string(r));
        }
    }
    if (!gaps.empty()) {
        std::string msg = "missing latents:";
        for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) msg += " " + gaps[i];
        if (gaps.size() > 20) msg += " ... (" + std::to_string(gaps.size()) + " total)";
        throw Error(ErrorKind::Completeness, msg);
    }

    std::size_t d = 0;
    for (int r : region_set) d += dims[r];
    std::vector<std::string> ids(samples.begin(), samples.end());
    std::vector<double> values;
    values.reserve(ids.size() * d);
    for (const auto& s : ids) {
        for (int r : region_set) {
            const auto& z = by_key.at({s, r})->z;
            for (double v : z) {
                if (!std::isfinite(v)) throw Error(ErrorKind::Range, "non-finite latent for " + s);
                values.push_back(v);
            }
        }
    }
    FeatureMatrix fm(std::move(ids), d, std::move(values));
    fm.region_set = std::move(region_set);
    return fm;
}

FeatureMatrix standardize(const FeatureMatrix& fm) {
    FeatureMatrix out = fm;
    for (std::size_t c = 0; c < fm.cols; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < fm.rows; ++r) mean += fm.row(r)[c];
        mean /= static_cast<double>(fm.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < fm.rows; ++r) var += (fm.row(r)[c] - mean) * (fm.row(r)[c] - mean);
        var /= static_cast<double>(fm.rows);
        const double sd = std::sqrt(var);
        for (std::size_t r = 0; r < fm.rows; ++r) {
            const double centred = fm.row(r)[c] - mean;
            out.row(r)[c] = sd > 0.0 ? centred / sd : centred;
        }
    }
    return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

namespace {

struct Run {
    std::vector<int> labels;
    std::vector<double> centroids;
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> trace;
};

std::vector<double> seed_plus_plus(const FeatureMatrix& fm, std::size_t k, Rng& rng) {
    const std::size_t n = fm.rows, d = fm.cols;
    std::vector<double> centroids;
    centroids.reserve(k * d);
    const auto first = rng.below(n);
    centroids.insert(centroids.end(), fm.row(first).begin(), fm.row(first).end());

    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(fm.row(i), fm.row(first));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : nearest) total += v;
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double running = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                running += nearest[i];
                if (running > target && nearest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            // Every point already coincides with a centre.
            pick = rng.below(n);
        }
        const auto row = fm.row(pick);
        centroids.insert(centroids.end(), row.begin(), row.end());
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(fm.row(i), row));
        }
    }
    return centroids;
}

Run lloyd(const FeatureMatrix& fm, const KMeansConfig& cfg, Rng& rng) {
    const std::size_t n = fm.rows, d = fm.cols, k = static_cast<std::size_t>(cfg.k);
    Run run;
    run.centroids = seed_plus_plus(fm, k, rng);
    run.labels.assign(n, 0);
    std::vector<double> dist(n);
    std::vector<double> sums(k * d);
    std::vector<std::size_t> counts(k);

    auto centroid = [&](std::size_t c) { return std::span<const double>(run.centroids.data() + c * d, d); };

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        run.iterations = iter + 1;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double dd = squared_distance(fm.row(i), centroid(c));
                if (dd < best) {
                    best = dd;
                    best_c = static_cast<int>(c);
                }
            }
            run.labels[i] = best_c;
            dist[i] = best;
            inertia += best;
        }
        run.trace.push_back(inertia);

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(run.labels[i]);
            ++counts[c];
            for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += fm.row(i)[j];
        }
        std::vector<double> next(k * d);
        std::vector<bool> taken(n, false);
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (std::size_t j = 0; j < d; ++j) next[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
            } else {
                // Empty cluster: move it onto the worst-served point.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!taken[i] && dist[i] > far_d) {
                        far_d = dist[i];
                        far = i;
                    }
                }
                taken[far] = true;
                std::copy(fm.row(far).begin(), fm.row(far).end(), next.begin() + static_cast<std::ptrdiff_t>(c * d));
            }
            shift = std::max(shift, std::sqrt(squared_distance(std::span<const double>(next.data() + c * d, d),
                                                               centroid(c))));
        }
        run.centroids = std::move(next);
        if (shift < cfg.tol || (cfg.tol == 0.0 && shift == 0.0)) break;
    }

    // Labels come from the last assignment step; recompute inertia against
    // the final centroids so the reported value matches the returned pair.
    run.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        run.inertia += squared_distance(fm.row(i), centroid(static_cast<std::size_t>(run.labels[i])));
    }
    return run;
}

}  // namespace

ClusterAssignment kmeans(const FeatureMatrix& input, const KMeansConfig& cfg) {
    if (cfg.k <= 0) throw Error(ErrorKind::Parameter, "k must be positive");
    if (cfg.restarts <= 0) throw Error(ErrorKind::Parameter, "restarts must be positive");
    if (cfg.max_iters <= 0) throw Error(ErrorKind::Parameter, "max_iters must be positive");
    if (cfg.tol < 0) throw Error(ErrorKind::Parameter, "tol must be non-negative");
    if (static_cast<std::size_t>(cfg.k) > input.rows) {
        throw Error(ErrorKind::Usage, "k = " + std::to_string(cfg.k) + " exceeds sample count " +
                                          std::to_string(input.rows));
    }
    if (input.cols == 0) throw Error(ErrorKind::Usage, "feature matrix has no columns");

    const FeatureMatrix fm = cfg.standardize ? standardize(input) : input;
    Run best;
    int best_restart = -1;
    for (int r = 0; r < cfg.restarts; ++r) {
        Rng rng(cfg.seed + static_cast<std::uint64_t>(r));
        Run run = lloyd(fm, cfg, rng);
        if (best_restart < 0 || run.inertia < best.inertia) {
            best = std::move(run);
            best_restart = r;
        }
    }
    ClusterAssignment a;
    a.labels = std::move(best.labels);
    a.centroids = std::move(best.centroids);
    a.k = static_cast<std::size_t>(cfg.k);
    a.dims = fm.cols;
    a.inertia = best.inertia;
    a.iterations_run = best.iterations;
    a.restarts = cfg.restarts;
    a.best_restart = best_restart;
    a.inertia_trace = std::move(best.trace);
    return a;
}

void save_assignment(const std::filesystem::path& path, const FeatureMatrix& fm, const ClusterAssignment& a) {
    if (a.labels.size() != fm.rows) throw Error(ErrorKind::Dimension, "assignment does not match feature rows");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "sample_id,cluster\n";
    for (std::size_t i = 0; i < fm.rows; ++i) out << fm.sample_ids[i] << ',' << a.labels[i] << '\n';
}

AssignmentFile load_assignment(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_sample = table.column("sample_id");
    const auto c_cluster = table.column("cluster");
    AssignmentFile f;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        f.sample_ids.push_back(table.rows[r][c_sample]);
        const auto c = csv::parse_int(table.rows[r][c_cluster], table, r);
        if (c < 0) throw Error(ErrorKind::Parse, path.string() + ": negative cluster index");
        f.clusters.push_back(static_cast<int>(c));
    }
    return f;
}

}  // namespace baccae::cluster
