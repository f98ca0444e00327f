#include "baccae/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"
#include "baccae/rng.hpp"

namespace baccae::embed {

namespace {

constexpr double kBetaMin = 1e-12;
constexpr double kBetaMax = 1e12;
constexpr int kMaxBisection = 50;
constexpr double kEntropyTol = 1e-5;

// Row-conditional probabilities for squared distances d (self excluded).
// Returns the Shannon entropy in nats.
double conditional_row(std::span<const double> d, std::size_t self, double beta, std::span<double> out) {
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d.size(); ++j) {
        if (j != self) dmin = std::min(dmin, d[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        out[j] = j == self ? 0.0 : std::exp(-beta * (d[j] - dmin));
        sum += out[j];
    }
    double weighted = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        out[j] /= sum;
        weighted += out[j] * (d[j] - dmin);
    }
    // H = log(sum) + beta * E[d - dmin] with the shifted normaliser.
    return std::log(sum) + beta * weighted;
}

}  // namespace

Affinities perplexity_affinities(const cluster::FeatureMatrix& fm, double perplexity) {
    const std::size_t n = fm.rows;
    if (n < 4) throw Error(ErrorKind::Embedding, "t-SNE needs at least 4 points, got " + std::to_string(n));
    if (!(perplexity > 0.0)) throw Error(ErrorKind::Parameter, "perplexity must be positive");
    if (!(perplexity < static_cast<double>(n) / 3.0)) {
        throw Error(ErrorKind::Parameter, "perplexity " + csv::format_double(perplexity) + " must be below n/3 = " +
                                              csv::format_double(static_cast<double>(n) / 3.0));
    }

    std::vector<double> dist(n * n, 0.0);
    bool any_nonzero = false;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = cluster::squared_distance(fm.row(i), fm.row(j));
            dist[i * n + j] = dist[j * n + i] = d;
            any_nonzero = any_nonzero || d > 0.0;
        }
    }
    if (!any_nonzero) throw Error(ErrorKind::Embedding, "all points coincide; affinities are undefined");

    Affinities aff;
    aff.n = n;
    std::vector<double> cond(n * n, 0.0);
    const double target = std::log(perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> d(dist.data() + i * n, n);
        const std::span<double> row(cond.data() + i * n, n);
        double lo = kBetaMin, hi = kBetaMax, beta = 1.0;
        double best_beta = beta, best_gap = std::numeric_limits<double>::infinity();
        bool converged = false;
        for (int step = 0; step < kMaxBisection; ++step) {
            const double h = conditional_row(d, i, beta, row);
            const double gap = std::abs(h - target);
            if (gap < best_gap) {
                best_gap = gap;
                best_beta = beta;
            }
            if (gap < kEntropyTol) {
                converged = true;
                break;
            }
            // Entropy falls as beta grows.
            if (h > target) {
                lo = beta;
            } else {
                hi = beta;
            }
            beta = std::sqrt(lo * hi);
        }
        if (!converged) {
            ++aff.unconverged_rows;
            conditional_row(d, i, best_beta, row);
        }
    }

    aff.p.assign(n * n, 0.0);
    const double norm = 2.0 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) aff.p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / norm;
    }
    return aff;
}

namespace {

// Unnormalised Student-t kernel values and their sum.
double student_kernel(std::span<const double> y, std::size_t n, std::vector<double>& num) {
    num.assign(n * n, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y[2 * i] - y[2 * j];
            const double dy = y[2 * i + 1] - y[2 * j + 1];
            const double q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = num[j * n + i] = q;
            sum += 2.0 * q;
        }
    }
    return sum;
}

}  // namespace

double kl_divergence(const Affinities& p, std::span<const double> points) {
    const std::size_t n = p.n;
    std::vector<double> num;
    const double sum = student_kernel(points, n, num);
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double pij = p.p[i * n + j];
            if (i == j || pij <= 0.0) continue;
            const double qij = std::max(num[i * n + j] / sum, std::numeric_limits<double>::min());
            kl += pij * std::log(pij / qij);
        }
    }
    return kl;
}

Embedding2D tsne(const cluster::FeatureMatrix& fm, const TsneConfig& cfg) {
    if (cfg.iterations <= 0) throw Error(ErrorKind::Parameter, "t-SNE iterations must be positive");
    if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::Parameter, "t-SNE learning rate must be positive");
    if (cfg.early_exaggeration < 1.0) throw Error(ErrorKind::Parameter, "early exaggeration must be >= 1");

    const Affinities aff = perplexity_affinities(fm, cfg.perplexity);
    const std::size_t n = aff.n;

    Rng rng(cfg.seed);
    std::vector<double> y(2 * n);
    for (auto& v : y) v = 1e-4 * rng.normal();

    Embedding2D out;
    out.kl_initial = kl_divergence(aff, y);

    std::vector<double> update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n), num;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const double exaggeration = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch_iter ? cfg.initial_momentum : cfg.final_momentum;
        const double sum = student_kernel(y, n, num);

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = num[i * n + j];
                const double mult = (exaggeration * aff.p[i * n + j] - q / sum) * q;
                grad[2 * i] += 4.0 * mult * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += 4.0 * mult * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        for (std::size_t k = 0; k < 2 * n; ++k) {
            const bool same_sign = (grad[k] > 0.0) == (update[k] > 0.0);
            gains[k] = same_sign ? std::max(gains[k] * 0.8, 0.01) : gains[k] + 0.2;
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y[2 * i];
            my += y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[2 * i] -= mx;
            y[2 * i + 1] -= my;
        }
    }
    for (double v : y) {
        if (!std::isfinite(v)) throw Error(ErrorKind::Embedding, "t-SNE diverged to non-finite coordinates");
    }
    out.kl_final = kl_divergence(aff, y);
    out.points = std::move(y);
    return out;
}

namespace {

// Categorical palette (Tableau 10).
constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

void emit_scatter(const Embedding2D& embedding, std::span<const std::string> sample_ids, std::span<const int> labels,
                  std::span<const std::string> label_names, const std::filesystem::path& csv_path,
                  const std::filesystem::path& svg_path) {
    const std::size_t n = embedding.size();
    if (sample_ids.size() != n) throw Error(ErrorKind::Usage, "sample ids do not match embedding size");
    if (!labels.empty() && labels.size() != n) throw Error(ErrorKind::Usage, "labels do not match embedding size");

    for (const auto& path : {csv_path, svg_path}) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    }
    {
        std::ofstream out(csv_path);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + csv_path.string());
        out << "sample_id,x,y,label\n";
        for (std::size_t i = 0; i < n; ++i) {
            out << sample_ids[i] << ',' << csv::format_double(embedding.points[2 * i]) << ','
                << csv::format_double(embedding.points[2 * i + 1]) << ',';
            if (!labels.empty()) out << labels[i];
            out << '\n';
        }
    }

    std::set<int> classes(labels.begin(), labels.end());
    if (classes.empty()) classes.insert(0);
    auto colour = [&](int label) {
        const auto idx = static_cast<std::size_t>(std::distance(classes.begin(), classes.find(label)));
        return kPalette[idx % std::size(kPalette)];
    };

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (n > 0) {
        xmin = ymin = std::numeric_limits<double>::infinity();
        xmax = ymax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            xmin = std::min(xmin, embedding.points[2 * i]);
            xmax = std::max(xmax, embedding.points[2 * i]);
            ymin = std::min(ymin, embedding.points[2 * i + 1]);
            ymax = std::max(ymax, embedding.points[2 * i + 1]);
        }
    }
    const double width = 640, height = 640, margin = 40, legend_w = 160;
    const double sx = (xmax > xmin) ? (width - 2 * margin) / (xmax - xmin) : 1.0;
    const double sy = (ymax > ymin) ? (height - 2 * margin) / (ymax - ymin) : 1.0;

    std::ofstream svg(svg_path);
    if (!svg) throw Error(ErrorKind::Io, "cannot write " + svg_path.string());
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width + legend_w) << "\" height=\""
        << fmt(height) << "\" viewBox=\"0 0 " << fmt(width + legend_w) << ' ' << fmt(height) << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << fmt(width + legend_w) << "\" height=\"" << fmt(height)
        << "\" style=\"fill:#ffffff\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double px = margin + (embedding.points[2 * i] - xmin) * sx;
        const double py = height - margin - (embedding.points[2 * i + 1] - ymin) * sy;
        const int label = labels.empty() ? 0 : labels[i];
        svg << "<circle cx=\"" << fmt(px) << "\" cy=\"" << fmt(py) << "\" r=\"3\" style=\"fill:" << colour(label)
            << ";fill-opacity:0.8\"/>\n";
    }
    double ly = margin;
    for (int label : classes) {
        std::string name = labels.empty() ? "all" : std::to_string(label);
        if (!labels.empty() && label >= 0 && static_cast<std::size_t>(label) < label_names.size()) {
            name = label_names[static_cast<std::size_t>(label)];
        }
        svg << "<rect class=\"legend\" x=\"" << fmt(width) << "\" y=\"" << fmt(ly - 9) << "\" width=\"10\" height=\"10\" style=\"fill:"
            << colour(label) << "\"/><text x=\"" << fmt(width + 16) << "\" y=\"" << fmt(ly)
            << "\" style=\"font-family:sans-serif;font-size:12px\">" << name << "</text>\n";
        ly += 18;
    }
    svg << "</svg>\n";
}

}  // namespace baccae::embed
