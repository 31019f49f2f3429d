#include "riskcast/eval.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "riskcast/train.hpp"

namespace riskcast {

using nlohmann::json;
namespace fs = std::filesystem;

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("auc: " + std::to_string(scores.size()) + " scores vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : labels) {
        if (y == 1) {
            ++n_pos;
        } else if (y == 0) {
            ++n_neg;
        } else {
            throw std::invalid_argument("auc: labels must be 0/1");
        }
    }
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("auc: needs both classes, got " + std::to_string(n_pos) +
                                    " positive / " + std::to_string(n_neg) + " negative");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks across ties, then the Mann-Whitney U statistic.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[idx[k]] == 1) rank_sum_pos += avg_rank;
        }
        i = j + 1;
    }
    double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

PatientRefSplit split_refs(const EEGRecording& rec, const LabelingConfig& cfg, int test_seizures) {
    if (test_seizures < 1) throw std::invalid_argument("split: test_seizures must be >= 1");
    std::vector<UnixTime> leading = leading_seizures(rec.seizure_onsets, cfg.leading_merge_min);
    if (static_cast<int>(leading.size()) <= test_seizures) {
        throw std::invalid_argument("split: patient " + rec.patient_id + " has " +
                                    std::to_string(leading.size()) + " leading seizures, cannot hold out " +
                                    std::to_string(test_seizures));
    }
    PatientRefSplit split;
    split.patient_id = rec.patient_id;
    const UnixTime first_test_onset = leading[leading.size() - static_cast<std::size_t>(test_seizures)];
    split.split_time = first_test_onset - (cfg.sph_min + cfg.sop_min) * 60.0;
    for (std::size_t k = 0; k + static_cast<std::size_t>(test_seizures) < leading.size(); ++k) {
        split.train_leading_onsets.push_back(leading[k]);
    }
    for (const WindowRef& ref : label_window_refs(rec, cfg)) {
        (ref.start_time >= split.split_time - 1e-6 ? split.test_refs : split.train_refs).push_back(ref);
    }
    return split;
}

std::vector<WindowRef> cap_refs_per_class(const std::vector<WindowRef>& refs, int max_per_class,
                                          Rng& rng) {
    if (max_per_class <= 0) return refs;
    std::vector<std::size_t> pre, inter;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        (refs[i].label == WindowLabel::Preictal ? pre : inter).push_back(i);
    }
    auto cap = [&](std::vector<std::size_t>& idx) {
        if (static_cast<int>(idx.size()) > max_per_class) {
            rng.shuffle(idx);
            idx.resize(static_cast<std::size_t>(max_per_class));
            std::sort(idx.begin(), idx.end());
        }
    };
    cap(pre);
    cap(inter);
    std::vector<std::size_t> keep;
    keep.reserve(pre.size() + inter.size());
    keep.insert(keep.end(), pre.begin(), pre.end());
    keep.insert(keep.end(), inter.begin(), inter.end());
    std::sort(keep.begin(), keep.end());
    std::vector<WindowRef> out;
    out.reserve(keep.size());
    for (std::size_t i : keep) out.push_back(refs[i]);
    return out;
}

json EvalConfig::to_json() const {
    return {{"mc_samples", mc_samples},
            {"threads", threads},
            {"seed", seed},
            {"fusion_mode", to_string(fusion_mode)},
            {"max_test_windows_per_class", max_test_windows_per_class}};
}

json EvalReport::to_json() const {
    json arms = json::array();
    for (const char* a : kArmNames) arms.push_back(a);
    json per_patient = json::array();
    for (const PatientEval& p : patients) {
        per_patient.push_back({{"patient_id", p.patient_id},
                               {"auc", p.auc_by_arm},
                               {"n_test_preictal", p.n_test_preictal},
                               {"n_test_interictal", p.n_test_interictal}});
    }
    return {{"arms", arms},
            {"per_patient", per_patient},
            {"macro_auc", macro_auc},
            {"window_weighted_auc", window_weighted_auc},
            {"config", config_echo},
            {"seed", seed}};
}

namespace {

constexpr std::uint64_t kEvalNoiseStream = 0xe7a1;

struct ArmScores {
    // scores[arm][window]
    std::vector<double> scores[4];
};

// BCNN arms share one weight draw per draw index; the noise stream depends
// only on (seed, draw), so scores are invariant to chunking, thread count,
// and patient order.
ArmScores score_patient(const PatientTestSet& patient, const BayesNet& cnn, const BayesNet& bcnn,
                        const PriorDensity& tod, const PriorDensity& dow, const EvalConfig& cfg) {
    const std::size_t n_windows = patient.windows.size();
    ArmScores out;
    for (auto& s : out.scores) s.assign(n_windows, 0.0);

    std::vector<double> f_tod(n_windows), f_both(n_windows);
    for (std::size_t i = 0; i < n_windows; ++i) {
        UnixTime t = patient.windows[i].window_start;
        f_tod[i] = fusion_factor(tod, t).value;
        f_both[i] = fusion_factor(tod, dow, t).value;
    }

    constexpr std::size_t kChunk = 64;
    std::vector<std::size_t> chunk_starts;
    for (std::size_t at = 0; at < n_windows; at += kChunk) chunk_starts.push_back(at);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        NoGradGuard no_grad;
        for (std::size_t ci = next.fetch_add(1); ci < chunk_starts.size(); ci = next.fetch_add(1)) {
            const std::size_t at = chunk_starts[ci];
            const std::size_t hi = std::min(n_windows, at + kChunk);
            std::vector<const LabeledWindow*> batch;
            for (std::size_t i = at; i < hi; ++i) batch.push_back(&patient.windows[i]);
            Tensor input = stack_features(batch);
            const std::size_t B = batch.size();

            // CNN arm: deterministic forward at the posterior means.
            {
                Tensor probs = softmax(cnn.forward(input));
                for (std::size_t i = 0; i < B; ++i) {
                    out.scores[0][at + i] = probs.data()[i * 2 + 1];
                }
            }

            for (int d = 0; d < cfg.mc_samples; ++d) {
                Rng rng = Rng::stream(cfg.seed, {kEvalNoiseStream, static_cast<std::uint64_t>(d)});
                auto noise = bcnn.draw_noise(rng);
                Tensor logits = bcnn.forward(input, &noise);
                const auto& ld = logits.data();
                for (std::size_t i = 0; i < B; ++i) {
                    double l0 = ld[i * 2], l1 = ld[i * 2 + 1];
                    double m = std::max(l0, l1);
                    double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
                    double p = e1 / (e0 + e1);
                    out.scores[1][at + i] += p;
                    if (cfg.fusion_mode == FusionMode::Probability) {
                        out.scores[2][at + i] += apply_fusion_probability(p, {f_tod[at + i]});
                        out.scores[3][at + i] += apply_fusion_probability(p, {f_both[at + i]});
                    } else {
                        double l1t = l1 * f_tod[at + i];
                        double l1b = l1 * f_both[at + i];
                        double mt = std::max(l0, l1t);
                        double mb = std::max(l0, l1b);
                        out.scores[2][at + i] +=
                            std::exp(l1t - mt) / (std::exp(l0 - mt) + std::exp(l1t - mt));
                        out.scores[3][at + i] +=
                            std::exp(l1b - mb) / (std::exp(l0 - mb) + std::exp(l1b - mb));
                    }
                }
            }
        }
    };
    int nw = std::max(1, std::min<int>(cfg.threads, static_cast<int>(chunk_starts.size())));
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    const double inv = 1.0 / static_cast<double>(cfg.mc_samples);
    for (int arm = 1; arm < 4; ++arm) {
        for (double& s : out.scores[arm]) s *= inv;
    }
    return out;
}

}  // namespace

EvalReport evaluate_arms(const std::vector<PatientTestSet>& patients, const BayesNet& cnn,
                         const BayesNet& bcnn, const PriorDensity& tod, const PriorDensity& dow,
                         const EvalConfig& cfg) {
    if (patients.empty()) throw std::invalid_argument("evaluate_arms: no patients");
    if (cfg.mc_samples < 1) throw std::invalid_argument("evaluate_arms: mc_samples must be >= 1");
    if (!cnn.deterministic()) {
        throw std::invalid_argument("evaluate_arms: CNN arm checkpoint must be deterministic");
    }

    std::vector<PatientTestSet const*> ordered;
    for (const auto& p : patients) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(),
              [](auto* a, auto* b) { return a->patient_id < b->patient_id; });

    EvalReport report;
    report.seed = cfg.seed;
    report.config_echo = cfg.to_json();
    double weighted_sum[4] = {0, 0, 0, 0};
    std::int64_t total_windows = 0;

    for (const PatientTestSet* patient : ordered) {
        std::vector<int> labels;
        for (const LabeledWindow& w : patient->windows) labels.push_back(static_cast<int>(w.label));
        ArmScores scores = score_patient(*patient, cnn, bcnn, tod, dow, cfg);

        PatientEval pe;
        pe.patient_id = patient->patient_id;
        for (int y : labels) (y == 1 ? pe.n_test_preictal : pe.n_test_interictal)++;
        for (int arm = 0; arm < 4; ++arm) {
            double a = auc(scores.scores[arm], labels);
            pe.auc_by_arm[kArmNames[arm]] = a;
            weighted_sum[arm] += a * static_cast<double>(labels.size());
        }
        total_windows += static_cast<std::int64_t>(labels.size());
        report.patients.push_back(std::move(pe));
    }

    for (int arm = 0; arm < 4; ++arm) {
        double sum = 0.0;
        for (const PatientEval& p : report.patients) sum += p.auc_by_arm.at(kArmNames[arm]);
        report.macro_auc[kArmNames[arm]] = sum / static_cast<double>(report.patients.size());
        report.window_weighted_auc[kArmNames[arm]] =
            weighted_sum[arm] / static_cast<double>(total_windows);
    }
    return report;
}

std::vector<TimelinePoint> timeline(const EEGRecording& rec, const BayesNet& net,
                                    const SpectrogramConfig& spec_cfg,
                                    const std::optional<PriorDensity>& tod,
                                    const std::optional<PriorDensity>& dow,
                                    const TimelineConfig& cfg) {
    rec.validate();
    const double fs = rec.sampling_rate_hz;
    const std::int64_t wsamp = static_cast<std::int64_t>(std::llround(cfg.window_sec * fs));
    const std::int64_t step = static_cast<std::int64_t>(std::llround(cfg.window_step_sec * fs));
    if (wsamp < 1 || step < 1) throw std::invalid_argument("timeline: window/step below one sample");
    if (rec.n_samples() < wsamp) {
        throw std::invalid_argument("timeline: recording shorter than one window");
    }
    if (cfg.fused && !tod && !dow) {
        throw std::invalid_argument("timeline: fused output requested without priors");
    }

    std::vector<std::int64_t> starts;
    for (std::int64_t s = 0; s + wsamp <= rec.n_samples(); s += step) starts.push_back(s);
    std::vector<TimelinePoint> points(starts.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < starts.size(); i = next.fetch_add(1)) {
            const UnixTime t0 = rec.start_time + static_cast<double>(starts[i]) / fs;
            Tensor features = spectrogram(rec, starts[i], wsamp, spec_cfg);
            std::optional<FusionFactor> factor;
            if (cfg.fused) {
                double f = 1.0;
                if (tod) f *= fusion_factor(*tod, t0).value;
                if (dow) f *= fusion_factor(*dow, t0).value;
                factor = FusionFactor{f};
            }
            PredictionDistribution dist = sample_predictions(
                net, features, cfg.mc_samples,
                splitmix64(cfg.seed ^ splitmix64(~static_cast<std::uint64_t>(i))), 1, factor,
                cfg.fusion_mode);
            TimelinePoint& p = points[i];
            p.timestamp = t0;
            p.score_mean = dist.mean;
            p.score_std = dist.std_dev;
            p.uncertainty = dist.uncertainty;
            p.uncertainty_clipped = clip_uncertainty(dist.uncertainty);
            p.fused = cfg.fused;
        }
    };
    int nw = std::max(1, std::min<int>(cfg.threads, static_cast<int>(starts.size())));
    if (nw == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return points;
}

void write_timeline_csv(const std::vector<TimelinePoint>& points, const std::string& path) {
    std::ostringstream os;
    os << "timestamp,score_mean,score_std,uncertainty,uncertainty_clipped,fused\n";
    char buf[64];
    auto num = [&buf](double v) -> std::string {
        if (std::isinf(v)) return "inf";
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        return buf;
    };
    for (const TimelinePoint& p : points) {
        os << iso8601_utc(p.timestamp) << ',' << num(p.score_mean) << ',' << num(p.score_std) << ','
           << num(p.uncertainty) << ',' << num(p.uncertainty_clipped) << ','
           << (p.fused ? "true" : "false") << '\n';
    }
    write_text_atomic(os.str(), path);
}

json RunManifest::to_json() const {
    return {{"command", command},
            {"argv", argv},
            {"config", config},
            {"seed", seed},
            {"code_version", code_version},
            {"input_digests", input_digests},
            {"outputs", outputs}};
}

std::string sha256_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("sha256: cannot open " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256: init failed");
    }
    std::vector<char> buf(1 << 16);
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        std::streamsize got = is.gcount();
        if (got > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

void write_text_atomic(const std::string& text, const std::string& path) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("write: cannot open " + tmp);
        os << text;
        if (!os) throw std::runtime_error("write: failed for " + tmp);
    }
    fs::rename(tmp, p);
}

void write_json_atomic(const json& j, const std::string& path) {
    write_text_atomic(j.dump(2) + "\n", path);
}

}  // namespace riskcast
