#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskcast/rng.hpp"
#include "riskcast/tensor.hpp"

namespace riskcast {

// Gaussian prior over a weight, p(w) = N(mean, std^2).
struct PriorSpec {
    double mean = 0.0;
    double std_dev = 1.0;
    void validate() const;
};

// Per-weight Gaussian posterior. sigma = softplus(rho) keeps the scale
// positive for every finite rho.
struct VariationalParam {
    Tensor mu;
    Tensor rho;
    std::int64_t size() const { return mu.size(); }
    Tensor sigma() const { return softplus(rho); }
};

// Reparameterized draw w = mu + softplus(rho) * eps; gradients flow to both
// mu and rho through the tape.
Tensor sample_weights(const VariationalParam& param, const Tensor& eps);
Tensor sample_weights(const VariationalParam& param, Rng& rng);

Tensor gaussian_eps(const Shape& shape, Rng& rng);

// Closed-form KL(q || p) summed over elements, differentiable w.r.t. mu/rho.
Tensor kl_to_prior(const VariationalParam& param, const PriorSpec& prior);

enum class LayerKind { Conv2d, Dense };

struct BayesLayer {
    LayerKind kind = LayerKind::Dense;
    VariationalParam weight;  // conv: [out,in,kh,kw]; dense: [in,out]
    VariationalParam bias;    // [out]
    PriorSpec prior;
    int stride = 1;
    int padding = 0;
    bool relu_act = false;
};

struct ConvBlock {
    int out_channels = 8;
    int kernel = 3;
    int stride = 1;
    int padding = 0;
    bool pool = true;
    bool operator==(const ConvBlock&) const = default;
};

struct Architecture {
    Shape input_shape;  // {channels, freq_bins, time_frames}
    std::vector<ConvBlock> conv;
    std::vector<int> dense_hidden;
    int n_classes = 2;

    // 3 conv blocks 16/32/64 + dense 128.
    static Architecture standard(Shape input_shape);
    // 2 conv blocks 8/16 + dense 32; fits desk-scale training budgets.
    static Architecture compact(Shape input_shape);
    static Architecture preset(const std::string& name, Shape input_shape);

    // Walks the shape pipeline; throws if any stage collapses below the
    // kernel/pool size. Returns the flattened feature count.
    std::int64_t flatten_dim() const;

    nlohmann::json to_json() const;
    static Architecture from_json(const nlohmann::json& j);
    bool operator==(const Architecture&) const = default;
};

struct LayerNoise {
    Tensor weight_eps;
    Tensor bias_eps;
};

// The Bayesian CNN: every trainable parameter is a Gaussian. With
// `deterministic` set the net runs at the posterior means with no weight
// noise and no KL pressure, which is exactly the plain-CNN baseline.
class BayesNet {
  public:
    BayesNet(Architecture arch, PriorSpec weight_prior, std::uint64_t init_seed,
             bool deterministic = false);

    const Architecture& architecture() const { return arch_; }
    const PriorSpec& weight_prior() const { return prior_; }
    bool deterministic() const { return deterministic_; }
    std::vector<BayesLayer>& layers() { return layers_; }
    const std::vector<BayesLayer>& layers() const { return layers_; }

    // One epsilon tensor per parameter; empty for deterministic nets.
    std::vector<LayerNoise> draw_noise(Rng& rng) const;

    // input [C,F,T] -> logits [n_classes]; input [N,C,F,T] -> [N,n_classes].
    // noise == nullptr runs at the posterior means. fusion_factors, when
    // given, multiply each example's preictal logit before return (the
    // last-layer injection point).
    Tensor forward(const Tensor& input, const std::vector<LayerNoise>* noise = nullptr,
                   const std::vector<double>* fusion_factors = nullptr) const;
    Tensor forward_sampled(const Tensor& input, Rng& rng,
                           const std::vector<double>* fusion_factors = nullptr) const;

    // Sum of kl_to_prior over every layer parameter.
    Tensor kl() const;

    std::int64_t parameter_count() const;
    // mu tensors, plus rho tensors unless deterministic.
    std::vector<Tensor> trainable_parameters() const;

  private:
    Architecture arch_;
    PriorSpec prior_;
    bool deterministic_ = false;
    std::vector<BayesLayer> layers_;
};

// Single-file archive: magic, JSON manifest, then raw little-endian float64
// buffers for every mu/rho in layer order. Round-trips bit-exactly.
void save_checkpoint(const BayesNet& net, const std::string& path, std::uint64_t seed);
BayesNet load_checkpoint(const std::string& path);
nlohmann::json checkpoint_manifest(const std::string& path);

}  // namespace riskcast
