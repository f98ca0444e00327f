#include "baccae/ccae.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "baccae/csv.hpp"
#include "baccae/error.hpp"

namespace baccae::ccae {

using nn::Shape;
using nn::Tensor;

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::ConvTranspose: return "conv_transpose";
        case LayerKind::Dense: return "dense";
        case LayerKind::Relu: return "relu";
        case LayerKind::Sigmoid: return "sigmoid";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (auto k : {LayerKind::Conv, LayerKind::ConvTranspose, LayerKind::Dense, LayerKind::Relu,
                   LayerKind::Sigmoid}) {
        if (name == to_string(k)) return k;
    }
    throw Error(ErrorKind::Config, "unknown layer kind '" + name + "'");
}

CCAEConfig CCAEConfig::defaults(int region_id, int input_h, int input_w) {
    CCAEConfig c;
    c.region_id = region_id;
    c.input_h = input_h;
    c.input_w = input_w;
    c.encoder = {LayerSpec::conv(5, 2, 8, 2), LayerSpec::relu(), LayerSpec::conv(5, 2, 16, 2), LayerSpec::relu()};
    return c;
}

namespace {

bool is_activation(LayerKind k) { return k == LayerKind::Relu || k == LayerKind::Sigmoid; }

[[noreturn]] void arch_error(std::size_t index, const LayerSpec& spec, const std::string& why) {
    throw Error(ErrorKind::Architecture,
                "encoder layer " + std::to_string(index) + " (" + to_string(spec.kind) + "): " + why);
}

long long conv_extent(long long in, long long k, long long s, long long p) {
    const long long span = in + 2 * p - k;
    return span < 0 ? 0 : span / s + 1;
}

}  // namespace

CCAEModel::CCAEModel(CCAEConfig config) : config_(std::move(config)) {
    const auto& c = config_;
    if (c.input_h <= 0 || c.input_w <= 0) throw Error(ErrorKind::Architecture, "input size must be positive");
    if (c.latent_dim <= 0) throw Error(ErrorKind::Architecture, "latent_dim must be positive");
    if (c.lambda < 0) throw Error(ErrorKind::Parameter, "lambda must be non-negative");
    if (c.epochs <= 0 || c.batch_size <= 0) throw Error(ErrorKind::Parameter, "epochs and batch_size must be positive");
    if (c.learning_rate < 0) throw Error(ErrorKind::Parameter, "learning_rate must be non-negative");

    Rng rng(c.seed);
    Shape shape{1, static_cast<std::size_t>(c.input_h), static_cast<std::size_t>(c.input_w)};

    // Encoder plan; remember for each parametric layer which activation fed it.
    struct ParamLayer {
        std::size_t layer_index;
        LayerKind preceding_activation;
        bool has_preceding_activation;
    };
    std::vector<ParamLayer> param_layers;
    std::size_t param_count = 0;

    auto add_param_layer = [&](Layer layer, Tensor w, Tensor b, bool encoder_side) {
        const std::string prefix = encoder_side ? "enc" : "dec";
        const std::string base = prefix + std::to_string(param_count++);
        layer.weight_name = base + ".w";
        layer.bias_name = base + ".b";
        params_.add(layer.weight_name, std::move(w));
        params_.add(layer.bias_name, std::move(b));
        layer.weight_index = params_.size() - 2;
        layer.bias_index = params_.size() - 1;
        layers_.push_back(std::move(layer));
    };

    auto preceding = [&](bool& has) {
        has = !layers_.empty() && is_activation(layers_.back().kind);
        return has ? layers_.back().kind : LayerKind::Relu;
    };

    for (std::size_t i = 0; i < c.encoder.size(); ++i) {
        const auto& spec = c.encoder[i];
        Layer layer;
        layer.kind = spec.kind;
        layer.in_shape = shape;
        switch (spec.kind) {
            case LayerKind::Conv: {
                if (shape.size() != 3) arch_error(i, spec, "convolution after a dense layer");
                if (spec.kernel_h <= 0 || spec.kernel_w <= 0) arch_error(i, spec, "kernel dims must be positive");
                if (spec.stride < 1) arch_error(i, spec, "stride must be >= 1");
                if (spec.padding < 0) arch_error(i, spec, "padding must be non-negative");
                if (spec.out <= 0) arch_error(i, spec, "channels must be positive");
                const long long h = conv_extent(static_cast<long long>(shape[1]), spec.kernel_h, spec.stride, spec.padding);
                const long long w = conv_extent(static_cast<long long>(shape[2]), spec.kernel_w, spec.stride, spec.padding);
                if (h <= 0 || w <= 0) {
                    arch_error(i, spec, "spatial collapse: input " + nn::shape_string(shape) + " with kernel " +
                                            std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w));
                }
                layer.geometry.stride = static_cast<std::size_t>(spec.stride);
                layer.geometry.padding = static_cast<std::size_t>(spec.padding);
                const auto oc = static_cast<std::size_t>(spec.out);
                const std::size_t kh = static_cast<std::size_t>(spec.kernel_h), kw = static_cast<std::size_t>(spec.kernel_w);
                layer.out_shape = {oc, static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
                bool has = false;
                const auto act = preceding(has);
                param_layers.push_back({layers_.size(), act, has});
                Tensor weights = nn::glorot_uniform({oc, shape[0], kh, kw}, shape[0] * kh * kw, oc * kh * kw, rng);
                add_param_layer(std::move(layer), std::move(weights), Tensor({oc}), true);
                break;
            }
            case LayerKind::Dense: {
                if (spec.out <= 0) arch_error(i, spec, "units must be positive");
                const std::size_t n = nn::shape_size(shape), m = static_cast<std::size_t>(spec.out);
                layer.out_shape = {m};
                bool has = false;
                const auto act = preceding(has);
                param_layers.push_back({layers_.size(), act, has});
                add_param_layer(std::move(layer), nn::glorot_uniform({m, n}, n, m, rng), Tensor({m}), true);
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Sigmoid:
                layer.out_shape = shape;
                layers_.push_back(std::move(layer));
                break;
            case LayerKind::ConvTranspose:
                arch_error(i, spec, "transposed convolutions belong to the decoder");
        }
        shape = layers_.back().out_shape;
    }

    // Linear bottleneck.
    {
        Layer layer;
        layer.kind = LayerKind::Dense;
        layer.in_shape = shape;
        const std::size_t n = nn::shape_size(shape), m = static_cast<std::size_t>(c.latent_dim);
        layer.out_shape = {m};
        bool has = false;
        const auto act = preceding(has);
        param_layers.push_back({layers_.size(), act, has});
        add_param_layer(std::move(layer), nn::glorot_uniform({m, n}, n, m, rng), Tensor({m}), true);
    }
    encoder_end_ = layers_.size();

    // Mirrored decoder.
    param_count = 0;
    for (auto it = param_layers.rbegin(); it != param_layers.rend(); ++it) {
        const Layer enc = layers_[it->layer_index];
        Layer layer;
        layer.in_shape = enc.out_shape;
        layer.out_shape = enc.in_shape;
        if (enc.kind == LayerKind::Conv) {
            layer.kind = LayerKind::ConvTranspose;
            layer.geometry = enc.geometry;
            const auto& wshape = params_.params()[enc.weight_index].value.shape();
            const std::size_t kh = wshape[2], kw = wshape[3];
            const auto s = enc.geometry.stride, p = enc.geometry.padding;
            layer.geometry.output_padding_h = enc.in_shape[1] + 2 * p - ((enc.out_shape[1] - 1) * s + kh);
            layer.geometry.output_padding_w = enc.in_shape[2] + 2 * p - ((enc.out_shape[2] - 1) * s + kw);
            const std::size_t ci = enc.out_shape[0], co = enc.in_shape[0];
            Tensor weights = nn::glorot_uniform({ci, co, kh, kw}, ci * kh * kw, co * kh * kw, rng);
            add_param_layer(std::move(layer), std::move(weights), Tensor({co}), false);
        } else {
            layer.kind = LayerKind::Dense;
            const std::size_t n = nn::shape_size(enc.out_shape), m = nn::shape_size(enc.in_shape);
            add_param_layer(std::move(layer), nn::glorot_uniform({m, n}, n, m, rng), Tensor({m}), false);
        }
        const bool last = std::next(it) == param_layers.rend();
        if (last || it->has_preceding_activation) {
            Layer act;
            act.kind = last ? LayerKind::Sigmoid : it->preceding_activation;
            act.in_shape = act.out_shape = enc.in_shape;
            layers_.push_back(std::move(act));
        }
    }
}

Shape CCAEModel::input_shape() const {
    return {1, static_cast<std::size_t>(config_.input_h), static_cast<std::size_t>(config_.input_w)};
}

void CCAEModel::check_input(const Tensor& image) const {
    if (image.shape() != input_shape()) {
        throw Error(ErrorKind::Dimension, "region " + std::to_string(config_.region_id) + " expects input " +
                                              nn::shape_string(input_shape()) + ", got " +
                                              nn::shape_string(image.shape()));
    }
}

Tensor CCAEModel::forward_range(const Tensor& x, std::size_t begin, std::size_t end,
                                std::vector<Tensor>* inputs) const {
    Tensor cur = x;
    const auto& p = params_.params();
    for (std::size_t i = begin; i < end; ++i) {
        const Layer& layer = layers_[i];
        if (inputs) (*inputs)[i] = cur;
        switch (layer.kind) {
            case LayerKind::Conv:
                cur = nn::conv2d(cur, p[layer.weight_index].value, p[layer.bias_index].value, layer.geometry);
                break;
            case LayerKind::ConvTranspose:
                cur = nn::conv_transpose2d(cur, p[layer.weight_index].value, p[layer.bias_index].value,
                                           layer.geometry);
                break;
            case LayerKind::Dense:
                cur = nn::dense(cur, p[layer.weight_index].value, p[layer.bias_index].value).reshaped(layer.out_shape);
                break;
            case LayerKind::Relu: cur = nn::relu(cur); break;
            case LayerKind::Sigmoid: cur = nn::sigmoid(cur); break;
        }
    }
    return cur;
}

Tensor CCAEModel::encode(const Tensor& image) const {
    check_input(image);
    return forward_range(image, 0, encoder_end_, nullptr);
}

Tensor CCAEModel::reconstruct(const Tensor& image) const {
    check_input(image);
    return forward_range(image, 0, layers_.size(), nullptr);
}

double CCAEModel::loss(std::span<const Tensor> batch) const {
    if (batch.empty()) throw Error(ErrorKind::Usage, "loss of an empty batch");
    double total = 0.0;
    for (const auto& x : batch) {
        check_input(x);
        const Tensor z = forward_range(x, 0, encoder_end_, nullptr);
        const Tensor y = forward_range(z, encoder_end_, layers_.size(), nullptr);
        total += nn::mse_loss(y, x) + nn::l2_penalty(z, config_.lambda);
    }
    return total / static_cast<double>(batch.size());
}

double CCAEModel::loss_and_grad(std::span<const Tensor> batch, std::vector<Tensor>& grads) const {
    if (batch.empty()) throw Error(ErrorKind::Usage, "loss of an empty batch");
    grads = params_.zero_grads();
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<Tensor> inputs(layers_.size());
    double total = 0.0;
    const auto& p = params_.params();

    auto accumulate = [&](std::size_t index, const Tensor& g) {
        Tensor& dst = grads[index];
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * g[i];
    };

    for (const auto& x : batch) {
        check_input(x);
        const Tensor y = forward_range(x, 0, layers_.size(), &inputs);
        const Tensor& z = inputs[encoder_end_];
        total += nn::mse_loss(y, x) + nn::l2_penalty(z, config_.lambda);

        Tensor g = nn::mse_grad(y, x);
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const Layer& layer = layers_[i];
            if (i + 1 == encoder_end_) {
                // g is now d loss / d z; add the latent penalty term.
                const Tensor pen = nn::l2_grad(z, config_.lambda);
                for (std::size_t j = 0; j < g.size(); ++j) g[j] += pen[j];
            }
            const Tensor& in = inputs[i];
            switch (layer.kind) {
                case LayerKind::Conv: {
                    auto cg = nn::conv2d_backward(g, in, p[layer.weight_index].value, layer.geometry);
                    accumulate(layer.weight_index, cg.weights);
                    accumulate(layer.bias_index, cg.bias);
                    g = std::move(cg.input);
                    break;
                }
                case LayerKind::ConvTranspose: {
                    auto cg = nn::conv_transpose2d_backward(g, in, p[layer.weight_index].value, layer.geometry);
                    accumulate(layer.weight_index, cg.weights);
                    accumulate(layer.bias_index, cg.bias);
                    g = std::move(cg.input);
                    break;
                }
                case LayerKind::Dense: {
                    auto dg = nn::dense_backward(g, in, p[layer.weight_index].value);
                    accumulate(layer.weight_index, dg.weights);
                    accumulate(layer.bias_index, dg.bias);
                    g = std::move(dg.input);
                    break;
                }
                case LayerKind::Relu: g = nn::relu_backward(g, in); break;
                case LayerKind::Sigmoid: {
                    const Tensor out = i + 1 < layers_.size() ? inputs[i + 1] : y;
                    g = nn::sigmoid_backward(g, out);
                    break;
                }
            }
        }
    }
    return total * scale;
}

void CCAEModel::load_params(const nn::ParamStore& store) {
    if (store.size() != params_.size()) {
        throw Error(ErrorKind::Load, "checkpoint has " + std::to_string(store.size()) + " parameters, model has " +
                                         std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& src = store.params()[i];
        auto& dst = params_.params()[i];
        if (src.name != dst.name || !src.value.same_shape(dst.value)) {
            throw Error(ErrorKind::Load, "checkpoint parameter '" + src.name + "' " +
                                             nn::shape_string(src.value.shape()) + " does not match model '" +
                                             dst.name + "' " + nn::shape_string(dst.value.shape()));
        }
    }
    params_ = store;
}

CCAEModel build(const CCAEConfig& config) { return CCAEModel(config); }

double loss(const CCAEModel& model, std::span<const Tensor> batch) { return model.loss(batch); }

void train(CCAEModel& model, std::span<const Tensor> dataset, const ProgressSink& progress) {
    if (dataset.empty()) throw Error(ErrorKind::Usage, "cannot train on an empty dataset");
    const auto& cfg = model.config();
    const Shape want = model.input_shape();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset[i].shape() != want) {
            throw Error(ErrorKind::Dimension, "training image " + std::to_string(i) + " has shape " +
                                                  nn::shape_string(dataset[i].shape()) + ", expected " +
                                                  nn::shape_string(want));
        }
    }
    nn::AdamConfig adam;
    adam.learning_rate = cfg.learning_rate;
    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
    std::vector<Tensor> batch;
    std::vector<Tensor> grads;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double weighted = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t stop = std::min(order.size(), start + batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
            const double l = model.loss_and_grad(batch, grads);
            weighted += l * static_cast<double>(stop - start);
            nn::adam_step(model.params(), grads, adam);
        }
        const double mean = weighted / static_cast<double>(order.size());
        model.history().push_back(mean);
        if (progress) progress(epoch, mean);
    }
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({1, static_cast<std::size_t>(img.height()), static_cast<std::size_t>(img.width())});
    const auto& px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) t[i] = px[i] / 255.0;
    return t;
}

LatentVector encode(const CCAEModel& model, const std::string& sample_id, const Tensor& image) {
    const Tensor z = model.encode(image);
    return {sample_id, model.config().region_id, z.vector()};
}

std::vector<LatentVector> encode_batch(const CCAEModel& model, std::span<const imgproc::RegionCrop> crops) {
    std::vector<LatentVector> out;
    out.reserve(crops.size());
    for (const auto& crop : crops) out.push_back(encode(model, crop.sample_id, image_to_tensor(crop.image)));
    return out;
}

void save_latents(const std::filesystem::path& path, std::span<const LatentVector> latents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    const std::size_t d = latents.empty() ? 0 : latents.front().z.size();
    out << "sample_id,region_id";
    for (std::size_t i = 0; i < d; ++i) out << ",z" << i;
    out << '\n';
    for (const auto& lv : latents) {
        if (lv.z.size() != d) throw Error(ErrorKind::Dimension, "latent vectors have mixed dimensions");
        out << lv.sample_id << ',' << lv.region_id;
        for (double v : lv.z) out << ',' << csv::format_double(v);
        out << '\n';
    }
}

std::vector<LatentVector> load_latents(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto c_sample = table.column("sample_id");
    const auto c_region = table.column("region_id");
    std::vector<std::size_t> z_cols;
    for (std::size_t i = 0;; ++i) {
        const auto it = std::find(table.header.begin(), table.header.end(), "z" + std::to_string(i));
        if (it == table.header.end()) break;
        z_cols.push_back(static_cast<std::size_t>(it - table.header.begin()));
    }
    std::vector<LatentVector> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        LatentVector lv;
        lv.sample_id = table.rows[r][c_sample];
        lv.region_id = static_cast<int>(csv::parse_int(table.rows[r][c_region], table, r));
        for (auto c : z_cols) lv.z.push_back(csv::parse_double(table.rows[r][c], table, r));
        out.push_back(std::move(lv));
    }
    return out;
}

}  // namespace baccae::ccae
