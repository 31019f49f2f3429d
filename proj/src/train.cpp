#include "riskcast/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace riskcast {

using nlohmann::json;

KlSchedule kl_schedule_from_string(const std::string& s) {
    if (s == "constant") return KlSchedule::Constant;
    if (s == "linear-anneal") return KlSchedule::LinearAnneal;
    throw std::invalid_argument("unknown KL schedule '" + s + "' (use constant|linear-anneal)");
}

std::string to_string(KlSchedule s) {
    return s == KlSchedule::Constant ? "constant" : "linear-anneal";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (kl_scale < 0) throw std::invalid_argument("train config: kl_scale must be >= 0");
    if (balance_ratio < 0) throw std::invalid_argument("train config: balance_ratio must be >= 0");
    if (max_windows_per_class < 0) {
        throw std::invalid_argument("train config: max_windows_per_class must be >= 0");
    }
    weight_prior.validate();
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"kl_schedule", to_string(kl_schedule)},
            {"kl_scale", kl_scale},
            {"seed", seed},
            {"arch_preset", arch_preset},
            {"weight_prior", {{"mean", weight_prior.mean}, {"std", weight_prior.std_dev}}},
            {"deterministic", deterministic},
            {"balance_ratio", balance_ratio},
            {"max_windows_per_class", max_windows_per_class},
            {"fused", fusion.has_value()}};
}

std::string TrainReport::to_jsonl() const {
    std::ostringstream os;
    for (const EpochStats& e : epochs) {
        json j = {{"epoch", e.epoch},
                  {"mean_neg_elbo", e.mean_neg_elbo},
                  {"mean_nll", e.mean_nll},
                  {"mean_kl_term", e.mean_kl_term},
                  {"wall_sec", e.wall_sec}};
        os << j.dump() << "\n";
    }
    return os.str();
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto& data = params_[pi].data();
        const auto& grad = params_[pi].grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < data.size(); ++i) {
            double g = grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

Tensor stack_features(const std::vector<const LabeledWindow*>& batch) {
    if (batch.empty()) throw std::invalid_argument("stack_features: empty batch");
    const Shape& fshape = batch.front()->features.shape();
    if (fshape.size() != 3) {
        throw std::invalid_argument("stack_features: features must be [C,F,T], got " +
                                    shape_str(fshape));
    }
    const std::int64_t per = batch.front()->features.size();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(per) * batch.size());
    for (const LabeledWindow* w : batch) {
        if (w->features.shape() != fshape) {
            throw std::invalid_argument("stack_features: inconsistent feature shapes " +
                                        shape_str(fshape) + " vs " + shape_str(w->features.shape()));
        }
        const auto& d = w->features.data();
        data.insert(data.end(), d.begin(), d.end());
    }
    return Tensor::from_data(std::move(data),
                             {static_cast<int>(batch.size()), fshape[0], fshape[1], fshape[2]});
}

std::vector<int> batch_labels(const std::vector<const LabeledWindow*>& batch) {
    std::vector<int> labels;
    labels.reserve(batch.size());
    for (const LabeledWindow* w : batch) labels.push_back(static_cast<int>(w->label));
    return labels;
}

ElboParts negative_elbo(const std::vector<const LabeledWindow*>& batch, const BayesNet& model,
                        double kl_weight, Rng& rng, const FusionTraining* fusion,
                        const std::vector<LayerNoise>* noise) {
    if (batch.empty()) throw std::invalid_argument("negative_elbo: empty batch");
    if (kl_weight < 0) throw std::invalid_argument("negative_elbo: kl_weight must be >= 0");

    Tensor input = stack_features(batch);
    std::vector<int> labels = batch_labels(batch);

    std::vector<double> factors;
    const std::vector<double>* factors_ptr = nullptr;
    if (fusion) {
        factors.reserve(batch.size());
        for (const LabeledWindow* w : batch) {
            factors.push_back(fusion_factor(fusion->tod, fusion->dow, w->window_start).value);
        }
        factors_ptr = &factors;
    }

    std::vector<LayerNoise> drawn;
    if (!noise) {
        drawn = model.draw_noise(rng);
        noise = &drawn;
    }
    Tensor logits = model.forward(input, noise, factors_ptr);
    Tensor nll = cross_entropy(logits, labels);

    ElboParts parts;
    parts.nll = nll.item();
    if (kl_weight > 0 && !model.deterministic()) {
        Tensor kl = model.kl();
        parts.kl = kl.item();
        parts.loss = add(nll, scale(kl, kl_weight));
    } else {
        parts.kl = 0.0;
        parts.loss = nll;
    }
    return parts;
}

Tensor negative_elbo(const std::vector<const LabeledWindow*>& batch, const BayesNet& model,
                     double kl_weight, Rng& rng) {
    return negative_elbo(batch, model, kl_weight, rng, nullptr, nullptr).loss;
}

std::vector<LabeledWindow> balance_classes(const std::vector<LabeledWindow>& examples, double ratio,
                                           Rng& rng) {
    std::vector<std::size_t> pre, inter;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        (examples[i].label == WindowLabel::Preictal ? pre : inter).push_back(i);
    }
    if (pre.empty() || inter.empty()) {
        throw std::invalid_argument("balance_classes: both classes must be present");
    }
    if (ratio <= 0) return examples;

    const auto& minority = pre.size() <= inter.size() ? pre : inter;
    const auto& majority = pre.size() <= inter.size() ? inter : pre;
    const std::size_t target = static_cast<std::size_t>(
        std::ceil(static_cast<double>(majority.size()) / ratio));
    std::vector<LabeledWindow> out = examples;
    while (minority.size() + (out.size() - examples.size()) < target) {
        std::size_t pick = minority[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(minority.size()) - 1))];
        out.push_back(examples[pick]);
    }
    return out;
}

TrainResult train(const std::vector<LabeledWindow>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    {
        bool has_pre = false, has_inter = false;
        for (const LabeledWindow& w : dataset) {
            (w.label == WindowLabel::Preictal ? has_pre : has_inter) = true;
        }
        if (!has_pre || !has_inter) {
            throw std::invalid_argument("train: dataset must contain both classes");
        }
    }

    // Deterministic per-class cap, then minority oversampling.
    std::vector<LabeledWindow> examples;
    if (cfg.max_windows_per_class > 0) {
        std::vector<std::size_t> pre, inter;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            (dataset[i].label == WindowLabel::Preictal ? pre : inter).push_back(i);
        }
        Rng cap_rng = Rng::stream(cfg.seed, {11});
        auto cap = [&](std::vector<std::size_t>& idx) {
            if (static_cast<int>(idx.size()) > cfg.max_windows_per_class) {
                cap_rng.shuffle(idx);
                idx.resize(static_cast<std::size_t>(cfg.max_windows_per_class));
                std::sort(idx.begin(), idx.end());
            }
        };
        cap(pre);
        cap(inter);
        for (std::size_t i : pre) examples.push_back(dataset[i]);
        for (std::size_t i : inter) examples.push_back(dataset[i]);
    } else {
        examples = dataset;
    }
    if (cfg.balance_ratio > 0) {
        Rng balance_rng = Rng::stream(cfg.seed, {12});
        examples = balance_classes(examples, cfg.balance_ratio, balance_rng);
    }

    const Shape& fshape = examples.front().features.shape();
    Architecture arch = Architecture::preset(cfg.arch_preset, fshape);
    BayesNet net(arch, cfg.weight_prior, splitmix64(cfg.seed ^ 0x5eedULL), cfg.deterministic);
    AdamOptimizer opt(net.trainable_parameters(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                      cfg.adam_eps);

    const std::int64_t n = static_cast<std::int64_t>(examples.size());
    const std::int64_t num_batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const double base_kl_weight = cfg.kl_scale / static_cast<double>(num_batches);

    TrainReport report;
    report.n_examples = n;
    report.n_batches_per_epoch = num_batches;

    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Rng shuffle_rng = Rng::stream(cfg.seed, {13});
    Rng noise_rng = Rng::stream(cfg.seed, {14});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double kl_weight = base_kl_weight;
        if (cfg.kl_schedule == KlSchedule::LinearAnneal) {
            kl_weight *= static_cast<double>(epoch + 1) / cfg.epochs;
        }
        double sum_loss = 0, sum_nll = 0, sum_kl = 0;
        for (std::int64_t b = 0; b < num_batches; ++b) {
            std::vector<const LabeledWindow*> batch;
            for (std::int64_t i = b * cfg.batch_size; i < std::min(n, (b + 1) * cfg.batch_size); ++i) {
                batch.push_back(&examples[order[static_cast<std::size_t>(i)]]);
            }
            opt.zero_grad();
            ElboParts parts = negative_elbo(batch, net, kl_weight, noise_rng,
                                            cfg.fusion ? &*cfg.fusion : nullptr);
            double loss_val = parts.loss.item();
            if (!std::isfinite(loss_val)) {
                throw TrainingError("train: loss diverged (non-finite) at epoch " +
                                    std::to_string(epoch + 1) + ", batch " + std::to_string(b + 1));
            }
            parts.loss.backward();
            opt.step();
            sum_loss += loss_val;
            sum_nll += parts.nll;
            sum_kl += kl_weight * parts.kl;
        }
        auto t1 = std::chrono::steady_clock::now();
        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.mean_neg_elbo = sum_loss / static_cast<double>(num_batches);
        stats.mean_nll = sum_nll / static_cast<double>(num_batches);
        stats.mean_kl_term = sum_kl / static_cast<double>(num_batches);
        stats.wall_sec = std::chrono::duration<double>(t1 - t0).count();
        report.epochs.push_back(stats);
    }

    // Final mean-weight accuracy over the (balanced) training set.
    {
        NoGradGuard no_grad;
        std::int64_t correct = 0;
        const std::size_t chunk = 256;
        for (std::size_t at = 0; at < examples.size(); at += chunk) {
            std::vector<const LabeledWindow*> batch;
            for (std::size_t i = at; i < std::min(examples.size(), at + chunk); ++i) {
                batch.push_back(&examples[i]);
            }
            Tensor logits = net.forward(stack_features(batch));
            const auto& ld = logits.data();
            for (std::size_t i = 0; i < batch.size(); ++i) {
                int pred = ld[i * 2 + 1] > ld[i * 2] ? 1 : 0;
                if (pred == static_cast<int>(batch[i]->label)) ++correct;
            }
        }
        report.final_train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    }
    return {std::move(net), std::move(report)};
}

}  // namespace riskcast
