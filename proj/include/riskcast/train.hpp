#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskcast/bayes.hpp"
#include "riskcast/data.hpp"
#include "riskcast/priors.hpp"
#include "riskcast/rng.hpp"

namespace riskcast {

enum class KlSchedule { Constant, LinearAnneal };
KlSchedule kl_schedule_from_string(const std::string& s);
std::string to_string(KlSchedule s);

// Event-time priors injected into training (Eq.-8-style last-layer scaling).
struct FusionTraining {
    PriorDensity tod = PriorDensity::uniform(PriorVariable::TimeOfDay);
    PriorDensity dow = PriorDensity::uniform(PriorVariable::DayOfWeek);
};

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    KlSchedule kl_schedule = KlSchedule::Constant;
    // Multiplies the 1/num_batches base weight; 1.0 is the plain SVI scaling.
    double kl_scale = 1.0;
    std::uint64_t seed = 0;
    std::string arch_preset = "compact";
    PriorSpec weight_prior;
    bool deterministic = false;  // trains the sigma=0 CNN baseline
    // Oversample the minority class to ratio 1:balance_ratio (minority target
    // = ceil(majority / balance_ratio)); 0 disables balancing.
    double balance_ratio = 1.0;
    // Deterministic subsample cap per class before balancing; 0 = unlimited.
    int max_windows_per_class = 0;
    std::optional<FusionTraining> fusion;

    void validate() const;
    nlohmann::json to_json() const;
};

struct EpochStats {
    int epoch = 0;
    double mean_neg_elbo = 0.0;
    double mean_nll = 0.0;
    double mean_kl_term = 0.0;
    double wall_sec = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double final_train_accuracy = 0.0;
    std::int64_t n_examples = 0;
    std::int64_t n_batches_per_epoch = 0;
    // One JSON record per epoch.
    std::string to_jsonl() const;
};

class TrainingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Adam over the flat parameter list; state arrays parallel the tensors.
class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step();
    void zero_grad();

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
};

struct ElboParts {
    Tensor loss;  // nll + kl_weight * kl
    double nll = 0.0;
    double kl = 0.0;
};

// Mean categorical cross-entropy of a single-weight-draw forward pass plus
// kl_weight times the full-network KL. `noise` overrides the per-call draw
// (used to freeze the reparameterization noise for finite differences).
ElboParts negative_elbo(const std::vector<const LabeledWindow*>& batch, const BayesNet& model,
                        double kl_weight, Rng& rng, const FusionTraining* fusion = nullptr,
                        const std::vector<LayerNoise>* noise = nullptr);
Tensor negative_elbo(const std::vector<const LabeledWindow*>& batch, const BayesNet& model,
                     double kl_weight, Rng& rng);

// Oversamples the minority class (with replacement) to 1:ratio against the
// majority; already-satisfied inputs pass through unchanged.
std::vector<LabeledWindow> balance_classes(const std::vector<LabeledWindow>& examples,
                                           double ratio, Rng& rng);

// Stacks window features into a [N,C,F,T] batch plus labels.
Tensor stack_features(const std::vector<const LabeledWindow*>& batch);
std::vector<int> batch_labels(const std::vector<const LabeledWindow*>& batch);

struct TrainResult {
    BayesNet net;
    TrainReport report;
};

TrainResult train(const std::vector<LabeledWindow>& dataset, const TrainConfig& cfg);

}  // namespace riskcast
