#include "baccae/optim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"

namespace baccae::nn {

Tensor& ParamStore::add(std::string name, Tensor init) {
    if (contains(name)) throw Error(ErrorKind::Parameter, "duplicate parameter '" + name + "'");
    const Shape shape = init.shape();
    params_.push_back({std::move(name), std::move(init), Tensor(shape), Tensor(shape)});
    return params_.back().value;
}

std::size_t ParamStore::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return i;
    }
    throw Error(ErrorKind::Parameter, "unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

Tensor& ParamStore::value(const std::string& name) { return params_[index_of(name)].value; }
const Tensor& ParamStore::value(const std::string& name) const { return params_[index_of(name)].value; }

std::vector<Tensor> ParamStore::zero_grads() const {
    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (const auto& p : params_) grads.emplace_back(p.value.shape());
    return grads;
}

void adam_step(ParamStore& store, std::span<const Tensor> grads, const AdamConfig& cfg) {
    auto& params = store.params();
    if (grads.size() != params.size()) {
        throw Error(ErrorKind::Dimension, "adam_step: " + std::to_string(grads.size()) + " gradients for " +
                                              std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!grads[i].same_shape(params[i].value)) {
            throw Error(ErrorKind::Dimension, "adam_step: gradient for '" + params[i].name + "' has shape " +
                                                  shape_string(grads[i].shape()) + ", parameter has " +
                                                  shape_string(params[i].value.shape()));
        }
    }
    store.set_step(store.step() + 1);
    const double t = static_cast<double>(store.step());
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const Tensor& g = grads[i];
        for (std::size_t j = 0; j < g.size(); ++j) {
            p.first_moment[j] = cfg.beta1 * p.first_moment[j] + (1.0 - cfg.beta1) * g[j];
            p.second_moment[j] = cfg.beta2 * p.second_moment[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = p.first_moment[j] / correction1;
            const double v_hat = p.second_moment[j] / correction2;
            p.value[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-limit, limit);
    return t;
}

namespace {
constexpr const char* kMagic = "CCAE1";
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint " + path.string());
    out << kMagic << '\n' << store.size() << ' ' << store.step() << '\n';
    for (const auto& p : store.params()) {
        out << p.name << ' ' << p.value.rank();
        for (auto d : p.value.shape()) out << ' ' << d;
        out << '\n';
    }
    for (const auto& p : store.params()) {
        for (double v : p.value.values()) out << csv::format_double(v) << '\n';
    }
    if (!out) throw Error(ErrorKind::Io, "failed writing checkpoint " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Load, "cannot open checkpoint " + path.string());
    const auto fail = [&](const std::string& why) -> Error {
        return Error(ErrorKind::Load, path.string() + ": " + why);
    };
    std::string magic;
    in >> magic;
    if (magic != kMagic) throw fail("bad magic '" + magic + "', expected " + kMagic);
    std::size_t count = 0;
    std::int64_t step = 0;
    if (!(in >> count >> step)) throw fail("truncated header");

    std::vector<std::pair<std::string, Shape>> layout;
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        std::size_t rank = 0;
        if (!(in >> name >> rank) || rank == 0) throw fail("bad parameter header " + std::to_string(i));
        Shape shape(rank);
        for (auto& d : shape) {
            if (!(in >> d) || d == 0) throw fail("bad shape for '" + name + "'");
        }
        layout.emplace_back(std::move(name), std::move(shape));
    }
    ParamStore store;
    for (auto& [name, shape] : layout) {
        std::vector<double> data(shape_size(shape));
        for (auto& v : data) {
            std::string token;
            if (!(in >> token)) throw fail("truncated values for '" + name + "'");
            const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
            if (ec != std::errc() || ptr != token.data() + token.size()) {
                throw fail("bad value '" + token + "' in '" + name + "'");
            }
        }
        store.add(name, Tensor(shape, std::move(data)));
    }
    store.set_step(step);
    return store;
}

GradCheckResult gradient_check(const std::function<double()>& objective, std::span<const GradProbe> probes,
                               double eps) {
    if (!(eps > 0.0)) throw Error(ErrorKind::Parameter, "gradient_check eps must be positive");
    GradCheckResult result;
    for (const auto& probe : probes) {
        if (!probe.value || !probe.analytic || !probe.value->same_shape(*probe.analytic)) {
            throw Error(ErrorKind::Dimension, "gradient_check: probe '" + probe.name + "' is malformed");
        }
        Tensor& x = *probe.value;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + eps;
            const double up = objective();
            x[i] = saved - eps;
            const double down = objective();
            x[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = (*probe.analytic)[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            const double err = std::abs(analytic - numeric) / denom;
            if (err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_param = probe.name;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace baccae::nn
