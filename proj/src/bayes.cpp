#include "riskcast/bayes.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace riskcast {

using nlohmann::json;

void PriorSpec::validate() const {
    if (!(std_dev > 0.0)) throw std::invalid_argument("PriorSpec: std must be > 0");
}

Tensor sample_weights(const VariationalParam& param, const Tensor& eps) {
    if (eps.shape() != param.mu.shape()) {
        throw std::invalid_argument("sample_weights: eps shape " + shape_str(eps.shape()) +
                                    " does not match parameter " + shape_str(param.mu.shape()));
    }
    return add(param.mu, mul(softplus(param.rho), eps));
}

Tensor sample_weights(const VariationalParam& param, Rng& rng) {
    return sample_weights(param, gaussian_eps(param.mu.shape(), rng));
}

Tensor gaussian_eps(const Shape& shape, Rng& rng) {
    std::vector<double> d(static_cast<std::size_t>(shape_size(shape)));
    for (double& v : d) v = rng.normal();
    return Tensor::from_data(std::move(d), shape);
}

Tensor kl_to_prior(const VariationalParam& param, const PriorSpec& prior) {
    prior.validate();
    // sum over elements of ln(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
    Tensor sq = softplus(param.rho);
    Tensor quad = add(square(sq), square(add_scalar(param.mu, -prior.mean)));
    double inv2var = 0.5 / (prior.std_dev * prior.std_dev);
    Tensor elem = add_scalar(sub(scale(quad, inv2var), log(sq)), std::log(prior.std_dev) - 0.5);
    return sum(elem);
}

Architecture Architecture::standard(Shape input_shape) {
    Architecture a;
    a.input_shape = std::move(input_shape);
    a.conv = {{16, 3, 1, 0, true}, {32, 3, 1, 0, true}, {64, 3, 1, 0, true}};
    a.dense_hidden = {128};
    return a;
}

Architecture Architecture::compact(Shape input_shape) {
    Architecture a;
    a.input_shape = std::move(input_shape);
    a.conv = {{8, 3, 1, 0, true}, {16, 3, 1, 0, true}};
    a.dense_hidden = {32};
    return a;
}

Architecture Architecture::preset(const std::string& name, Shape input_shape) {
    if (name == "standard") return standard(std::move(input_shape));
    if (name == "compact") return compact(std::move(input_shape));
    throw std::invalid_argument("unknown architecture preset '" + name + "'");
}

std::int64_t Architecture::flatten_dim() const {
    if (input_shape.size() != 3) {
        throw std::invalid_argument("architecture: input shape must be [C,F,T], got " +
                                    shape_str(input_shape));
    }
    int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    for (std::size_t i = 0; i < conv.size(); ++i) {
        const ConvBlock& b = conv[i];
        int oh = (h + 2 * b.padding - b.kernel) / b.stride + 1;
        int ow = (w + 2 * b.padding - b.kernel) / b.stride + 1;
        if (b.kernel > h + 2 * b.padding || b.kernel > w + 2 * b.padding || oh < 1 || ow < 1) {
            throw std::invalid_argument("architecture: conv block " + std::to_string(i) +
                                        " kernel does not fit feature map " + shape_str({c, h, w}));
        }
        h = oh;
        w = ow;
        c = b.out_channels;
        if (b.pool) {
            h /= 2;
            w /= 2;
            if (h < 1 || w < 1) {
                throw std::invalid_argument("architecture: pool in block " + std::to_string(i) +
                                            " collapses the feature map");
            }
        }
    }
    return static_cast<std::int64_t>(c) * h * w;
}

json Architecture::to_json() const {
    json blocks = json::array();
    for (const ConvBlock& b : conv) {
        blocks.push_back({{"out_channels", b.out_channels},
                          {"kernel", b.kernel},
                          {"stride", b.stride},
                          {"padding", b.padding},
                          {"pool", b.pool}});
    }
    return {{"input_shape", input_shape},
            {"conv", blocks},
            {"dense_hidden", dense_hidden},
            {"n_classes", n_classes}};
}

Architecture Architecture::from_json(const json& j) {
    Architecture a;
    a.input_shape = j.at("input_shape").get<Shape>();
    for (const auto& b : j.at("conv")) {
        a.conv.push_back({b.at("out_channels").get<int>(), b.at("kernel").get<int>(),
                          b.at("stride").get<int>(), b.at("padding").get<int>(),
                          b.at("pool").get<bool>()});
    }
    a.dense_hidden = j.at("dense_hidden").get<std::vector<int>>();
    a.n_classes = j.at("n_classes").get<int>();
    return a;
}

namespace {

Tensor he_uniform(const Shape& shape, std::int64_t fan_in, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> d(static_cast<std::size_t>(shape_size(shape)));
    for (double& v : d) v = rng.uniform(-limit, limit);
    return Tensor::from_data(std::move(d), shape, true);
}

constexpr double kInitRho = -3.0;  // sigma ~ 0.0486, near-deterministic start

VariationalParam make_param(const Shape& shape, std::int64_t fan_in, bool zero_mean, Rng& rng) {
    VariationalParam p;
    p.mu = zero_mean ? Tensor::zeros(shape, true) : he_uniform(shape, fan_in, rng);
    p.rho = Tensor::full(shape, kInitRho, true);
    return p;
}

}  // namespace

BayesNet::BayesNet(Architecture arch, PriorSpec weight_prior, std::uint64_t init_seed,
                   bool deterministic)
    : arch_(std::move(arch)), prior_(weight_prior), deterministic_(deterministic) {
    prior_.validate();
    std::int64_t flat = arch_.flatten_dim();  // validates the pipeline
    Rng rng(init_seed, 0);

    int in_ch = arch_.input_shape[0];
    for (const ConvBlock& b : arch_.conv) {
        BayesLayer layer;
        layer.kind = LayerKind::Conv2d;
        layer.prior = prior_;
        layer.stride = b.stride;
        layer.padding = b.padding;
        layer.relu_act = true;
        std::int64_t fan_in = static_cast<std::int64_t>(in_ch) * b.kernel * b.kernel;
        layer.weight = make_param({b.out_channels, in_ch, b.kernel, b.kernel}, fan_in, false, rng);
        layer.bias = make_param({b.out_channels}, fan_in, true, rng);
        layers_.push_back(std::move(layer));
        in_ch = b.out_channels;
    }

    std::int64_t in_features = flat;
    std::vector<int> dense_dims = arch_.dense_hidden;
    dense_dims.push_back(arch_.n_classes);
    for (std::size_t i = 0; i < dense_dims.size(); ++i) {
        BayesLayer layer;
        layer.kind = LayerKind::Dense;
        layer.prior = prior_;
        layer.relu_act = i + 1 < dense_dims.size();
        layer.weight = make_param({static_cast<int>(in_features), dense_dims[i]}, in_features, false, rng);
        layer.bias = make_param({dense_dims[i]}, in_features, true, rng);
        layers_.push_back(std::move(layer));
        in_features = dense_dims[i];
    }
}

std::vector<LayerNoise> BayesNet::draw_noise(Rng& rng) const {
    std::vector<LayerNoise> noise;
    if (deterministic_) return noise;
    noise.reserve(layers_.size());
    for (const BayesLayer& layer : layers_) {
        LayerNoise n;
        n.weight_eps = gaussian_eps(layer.weight.mu.shape(), rng);
        n.bias_eps = gaussian_eps(layer.bias.mu.shape(), rng);
        noise.push_back(std::move(n));
    }
    return noise;
}

Tensor BayesNet::forward(const Tensor& input, const std::vector<LayerNoise>* noise,
                         const std::vector<double>* fusion_factors) const {
    bool batched = input.ndim() == 4;
    if (!batched && input.ndim() != 3) {
        throw std::invalid_argument("BayesNet::forward: input must be [C,F,T] or [N,C,F,T], got " +
                                    shape_str(input.shape()));
    }
    Shape expected = arch_.input_shape;
    Shape got(input.shape().begin() + (batched ? 1 : 0), input.shape().end());
    if (got != expected) {
        throw std::invalid_argument("BayesNet::forward: input " + shape_str(got) +
                                    " does not match architecture input " + shape_str(expected));
    }
    if (noise && !noise->empty() && noise->size() != layers_.size()) {
        throw std::invalid_argument("BayesNet::forward: noise for " + std::to_string(noise->size()) +
                                    " layers, net has " + std::to_string(layers_.size()));
    }
    bool sampled = noise && !noise->empty() && !deterministic_;
    int N = batched ? input.shape()[0] : 1;

    Tensor x = batched ? input
                       : reshape(input, {1, expected[0], expected[1], expected[2]});
    bool flattened = false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const BayesLayer& layer = layers_[i];
        Tensor w = sampled ? sample_weights(layer.weight, (*noise)[i].weight_eps) : layer.weight.mu;
        Tensor b = sampled ? sample_weights(layer.bias, (*noise)[i].bias_eps) : layer.bias.mu;
        if (layer.kind == LayerKind::Conv2d) {
            x = conv2d(x, w, layer.stride, layer.padding, b);
            if (layer.relu_act) x = relu(x);
            if (arch_.conv[i].pool) x = max_pool2d(x, 2);
        } else {
            if (!flattened) {
                x = reshape(x, {N, static_cast<int>(x.size() / N)});
                flattened = true;
            }
            x = add(matmul(x, w), b);
            if (layer.relu_act) x = relu(x);
        }
    }
    if (!flattened) x = reshape(x, {N, static_cast<int>(x.size() / N)});

    if (fusion_factors) {
        if (arch_.n_classes != 2) {
            throw std::invalid_argument("fusion requires a 2-class head");
        }
        if (static_cast<int>(fusion_factors->size()) != N) {
            throw std::invalid_argument("BayesNet::forward: " + std::to_string(fusion_factors->size()) +
                                        " fusion factors for batch of " + std::to_string(N));
        }
        std::vector<double> mask(static_cast<std::size_t>(N) * 2, 1.0);
        for (int i = 0; i < N; ++i) {
            double f = (*fusion_factors)[i];
            if (!(f > 0.0)) throw std::invalid_argument("fusion factor must be > 0");
            mask[static_cast<std::size_t>(i) * 2 + 1] = f;
        }
        x = mul(x, Tensor::from_data(std::move(mask), {N, 2}));
    }
    return batched ? x : reshape(x, {arch_.n_classes});
}

Tensor BayesNet::forward_sampled(const Tensor& input, Rng& rng,
                                 const std::vector<double>* fusion_factors) const {
    auto noise = draw_noise(rng);
    return forward(input, &noise, fusion_factors);
}

Tensor BayesNet::kl() const {
    Tensor total;
    for (const BayesLayer& layer : layers_) {
        Tensor k = add(kl_to_prior(layer.weight, layer.prior), kl_to_prior(layer.bias, layer.prior));
        total = total.defined() ? add(total, k) : k;
    }
    return total;
}

std::int64_t BayesNet::parameter_count() const {
    std::int64_t n = 0;
    for (const BayesLayer& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
}

std::vector<Tensor> BayesNet::trainable_parameters() const {
    std::vector<Tensor> params;
    for (const BayesLayer& layer : layers_) {
        params.push_back(layer.weight.mu);
        params.push_back(layer.bias.mu);
        if (!deterministic_) {
            params.push_back(layer.weight.rho);
            params.push_back(layer.bias.rho);
        }
    }
    return params;
}

namespace {

constexpr char kMagic[8] = {'R', 'C', 'K', 'P', '0', '0', '0', '1'};

void write_u64le(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint64_t read_u64le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64le_buffer(std::ostream& os, const std::vector<double>& v) {
    for (double d : v) write_u64le(os, std::bit_cast<std::uint64_t>(d));
}

void read_f64le_buffer(std::istream& is, std::vector<double>& v) {
    for (double& d : v) d = std::bit_cast<double>(read_u64le(is));
}

}  // namespace

void save_checkpoint(const BayesNet& net, const std::string& path, std::uint64_t seed) {
    json layers = json::array();
    for (const BayesLayer& layer : net.layers()) {
        layers.push_back({{"kind", layer.kind == LayerKind::Conv2d ? "conv2d" : "dense"},
                          {"weight_shape", layer.weight.mu.shape()},
                          {"bias_shape", layer.bias.mu.shape()},
                          {"stride", layer.stride},
                          {"padding", layer.padding},
                          {"relu", layer.relu_act}});
    }
    json manifest = {{"format_version", 1},
                     {"architecture", net.architecture().to_json()},
                     {"deterministic", net.deterministic()},
                     {"seed", seed},
                     {"prior", {{"mean", net.weight_prior().mean}, {"std", net.weight_prior().std_dev}}},
                     {"layers", layers}};
    std::string mtext = manifest.dump();

    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("save_checkpoint: cannot open " + tmp);
        os.write(kMagic, 8);
        write_u64le(os, mtext.size());
        os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
        for (const BayesLayer& layer : net.layers()) {
            write_f64le_buffer(os, layer.weight.mu.data());
            write_f64le_buffer(os, layer.weight.rho.data());
            write_f64le_buffer(os, layer.bias.mu.data());
            write_f64le_buffer(os, layer.bias.rho.data());
        }
        if (!os) throw std::runtime_error("save_checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("save_checkpoint: cannot move " + tmp + " into place");
    }
}

namespace {

json read_manifest(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || !std::equal(magic, magic + 8, kMagic)) {
        throw std::runtime_error("checkpoint " + path + ": bad magic");
    }
    std::uint64_t mlen = read_u64le(is);
    std::string mtext(mlen, '\0');
    is.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!is) throw std::runtime_error("checkpoint " + path + ": truncated manifest");
    return json::parse(mtext);
}

}  // namespace

nlohmann::json checkpoint_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint " + path + ": cannot open");
    return read_manifest(is, path);
}

BayesNet load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint " + path + ": cannot open");
    json manifest = read_manifest(is, path);
    if (manifest.at("format_version").get<int>() != 1) {
        throw std::runtime_error("checkpoint " + path + ": unsupported format version");
    }
    Architecture arch = Architecture::from_json(manifest.at("architecture"));
    PriorSpec prior{manifest.at("prior").at("mean").get<double>(),
                    manifest.at("prior").at("std").get<double>()};
    BayesNet net(arch, prior, 0, manifest.at("deterministic").get<bool>());
    for (BayesLayer& layer : net.layers()) {
        read_f64le_buffer(is, layer.weight.mu.data());
        read_f64le_buffer(is, layer.weight.rho.data());
        read_f64le_buffer(is, layer.bias.mu.data());
        read_f64le_buffer(is, layer.bias.rho.data());
    }
    if (!is) throw std::runtime_error("checkpoint " + path + ": truncated parameter buffers");
    return net;
}

}  // namespace riskcast
