#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "baccae/image.hpp"
#include "baccae/imgproc.hpp"
#include "baccae/layers.hpp"
#include "baccae/optim.hpp"

namespace baccae::ccae {

enum class LayerKind { Conv, ConvTranspose, Dense, Relu, Sigmoid };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int out = 0;  // channels for conv kinds, units for dense
    int padding = 0;

    static LayerSpec conv(int kernel, int stride, int channels, int padding) {
        return {LayerKind::Conv, kernel, kernel, stride, channels, padding};
    }
    static LayerSpec dense(int units) { return {LayerKind::Dense, 0, 0, 1, units, 0}; }
    static LayerSpec relu() { return {LayerKind::Relu}; }
    static LayerSpec sigmoid() { return {LayerKind::Sigmoid}; }

    bool operator==(const LayerSpec&) const = default;
};

struct CCAEConfig {
    int region_id = 1;
    int input_h = 64;
    int input_w = 64;
    std::vector<LayerSpec> encoder;
    int latent_dim = 16;
    double lambda = 0.01;
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    // conv(k5,s2,c8) relu conv(k5,s2,c16) relu, latent 16.
    static CCAEConfig defaults(int region_id, int input_h, int input_w);

    bool operator==(const CCAEConfig&) const = default;
};

// One step of the resolved layer plan.
struct Layer {
    LayerKind kind = LayerKind::Relu;
    nn::ConvGeometry geometry;
    std::string weight_name;
    std::string bias_name;
    std::size_t weight_index = 0;
    std::size_t bias_index = 0;
    nn::Shape in_shape;
    nn::Shape out_shape;

    bool has_params() const { return !weight_name.empty(); }
};

struct LatentVector {
    std::string sample_id;
    int region_id = 0;
    std::vector<double> z;
};

using ProgressSink = std::function<void(int epoch, double mean_loss)>;

// Encoder (config.encoder then a linear dense bottleneck) and its mirrored
// decoder. Each conv is undone by a transposed conv, each dense by a dense
// back to the input shape, and the final decoder layer ends in a sigmoid.
class CCAEModel {
public:
    explicit CCAEModel(CCAEConfig config);

    const CCAEConfig& config() const noexcept { return config_; }
    nn::ParamStore& params() noexcept { return params_; }
    const nn::ParamStore& params() const noexcept { return params_; }
    const std::vector<double>& history() const noexcept { return history_; }
    std::vector<double>& history() noexcept { return history_; }

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    // Index one past the bottleneck layer; layers before it form the encoder.
    std::size_t encoder_end() const noexcept { return encoder_end_; }
    nn::Shape input_shape() const;

    nn::Tensor encode(const nn::Tensor& image) const;
    nn::Tensor reconstruct(const nn::Tensor& image) const;

    // Mean over the batch of mse(decode(encode(x)), x) + lambda * |encode(x)|^2.
    double loss(std::span<const nn::Tensor> batch) const;
    // Same value; fills grads (aligned with params()) with d loss / d param.
    double loss_and_grad(std::span<const nn::Tensor> batch, std::vector<nn::Tensor>& grads) const;

    void load_params(const nn::ParamStore& store);

private:
    nn::Tensor forward_range(const nn::Tensor& x, std::size_t begin, std::size_t end,
                             std::vector<nn::Tensor>* inputs) const;
    void check_input(const nn::Tensor& image) const;

    CCAEConfig config_;
    nn::ParamStore params_;
    std::vector<Layer> layers_;
    std::size_t encoder_end_ = 0;
    std::vector<double> history_;
};

CCAEModel build(const CCAEConfig& config);

double loss(const CCAEModel& model, std::span<const nn::Tensor> batch);

// Shuffled minibatch Adam over config.epochs; appends one mean loss per epoch.
void train(CCAEModel& model, std::span<const nn::Tensor> dataset, const ProgressSink& progress = {});

// Intensities scaled by 1/255 into a [1,H,W] tensor.
nn::Tensor image_to_tensor(const Image& img);

LatentVector encode(const CCAEModel& model, const std::string& sample_id, const nn::Tensor& image);
std::vector<LatentVector> encode_batch(const CCAEModel& model, std::span<const imgproc::RegionCrop> crops);

// Latent CSV: header sample_id,region_id,z0..z{d-1}.
void save_latents(const std::filesystem::path& path, std::span<const LatentVector> latents);
std::vector<LatentVector> load_latents(const std::filesystem::path& path);

}  // namespace baccae::ccae
