#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "riskcast/bayes.hpp"
#include "riskcast/data.hpp"
#include "riskcast/eval.hpp"
#include "riskcast/priors.hpp"
#include "riskcast/train.hpp"
#include "riskcast/uncertainty.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace riskcast;

namespace {

struct PriorsFile {
    PriorDensity tod = PriorDensity::uniform(PriorVariable::TimeOfDay);
    PriorDensity dow = PriorDensity::uniform(PriorVariable::DayOfWeek);
};

PriorsFile load_priors(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open priors file " + path);
    json j = json::parse(is);
    PriorsFile p;
    p.tod = PriorDensity::from_json(j.at("tod"));
    p.dow = PriorDensity::from_json(j.at("dow"));
    return p;
}

void write_manifest(const RunManifest& manifest, const std::string& primary_output) {
    std::string path = primary_output;
    if (fs::is_directory(primary_output)) {
        path = (fs::path(primary_output) / "manifest.json").string();
    } else {
        path += ".manifest.json";
    }
    write_json_atomic(manifest.to_json(), path);
}

RunManifest base_manifest(const std::string& command, int argc, char** argv, std::uint64_t seed) {
    RunManifest m;
    m.command = command;
    for (int i = 0; i < argc; ++i) m.argv.emplace_back(argv[i]);
    m.seed = seed;
    m.code_version = kCodeVersion;
    return m;
}

struct WindowFlags {
    double window_sec = 30.0;
    double step_sec = 15.0;
    int test_seizures = 1;
    LabelingConfig labeling() const {
        LabelingConfig cfg;
        cfg.window_sec = window_sec;
        cfg.window_step_sec = step_sec;
        return cfg;
    }
};

void add_window_flags(CLI::App* cmd, WindowFlags& flags) {
    cmd->add_option("--window-sec", flags.window_sec, "analysis window length in seconds");
    cmd->add_option("--step-sec", flags.step_sec, "window step in seconds");
    cmd->add_option("--test-seizures", flags.test_seizures,
                    "leading seizures per patient held out for testing");
}

int run_synth(const std::string& spec_path, const std::string& out_dir, std::uint64_t seed,
              int argc, char** argv) {
    SyntheticSpec spec;
    if (!spec_path.empty()) {
        std::ifstream is(spec_path);
        if (!is) throw std::runtime_error("cannot open spec " + spec_path);
        spec = SyntheticSpec::from_json(json::parse(is));
    }
    RunManifest manifest = base_manifest("synth", argc, argv, seed);
    manifest.config = spec.to_json();
    if (!spec_path.empty()) manifest.input_digests[spec_path] = sha256_file(spec_path);

    fs::create_directories(out_dir);
    write_json_atomic(spec.to_json(), (fs::path(out_dir) / "synthetic_spec.json").string());
    manifest.outputs.push_back((fs::path(out_dir) / "synthetic_spec.json").string());
    for (int i = 0; i < spec.n_patients; ++i) {
        EEGRecording rec = synthesize_recording(spec, i, seed);
        std::string meta = save_recording(rec, out_dir);
        manifest.outputs.push_back(meta);
        std::cout << "wrote " << meta << " (" << rec.seizure_onsets.size() << " onsets)\n";
    }
    write_manifest(manifest, out_dir);
    return 0;
}

int run_fit_priors(const std::string& data_dir, const std::string& out_path,
                   const WindowFlags& wflags, std::optional<double> bandwidth,
                   const std::string& kde_mode, std::uint64_t seed, int argc, char** argv) {
    LabelingConfig labeling = wflags.labeling();
    KdeMode mode = kde_mode == "plain" ? KdeMode::Plain : KdeMode::Circular;

    std::vector<double> tod_samples, dow_samples;
    RunManifest manifest = base_manifest("fit-priors", argc, argv, seed);
    for (const std::string& meta : list_recordings(data_dir)) {
        EEGRecording rec = load_recording(meta);
        PatientRefSplit split = split_refs(rec, labeling, wflags.test_seizures);
        for (UnixTime onset : split.train_leading_onsets) {
            EventTimeSample e = event_time_from_unix(onset);
            tod_samples.push_back(e.tod_hours);
            dow_samples.push_back(e.dow_days);
        }
        manifest.input_digests[meta] = sha256_file(meta);
    }
    if (tod_samples.empty()) {
        throw std::invalid_argument("fit-priors: no training-fold seizures found in " + data_dir);
    }
    PriorDensity tod = PriorDensity::fit(tod_samples, PriorVariable::TimeOfDay, bandwidth, mode);
    PriorDensity dow = PriorDensity::fit(dow_samples, PriorVariable::DayOfWeek, bandwidth, mode);
    json out = {{"tod", tod.to_json()}, {"dow", dow.to_json()},
                {"n_train_onsets", tod_samples.size()}};
    write_json_atomic(out, out_path);
    manifest.config = {{"bandwidth", bandwidth ? json(*bandwidth) : json(nullptr)},
                       {"mode", kde_mode},
                       {"test_seizures", wflags.test_seizures}};
    manifest.outputs.push_back(out_path);
    write_manifest(manifest, out_path);
    std::cout << "fitted priors on " << tod_samples.size() << " training-fold onsets -> " << out_path
              << "\n";
    return 0;
}

int run_train(const std::string& data_dir, const std::string& out_path, TrainConfig cfg,
              const WindowFlags& wflags, int per_patient_cap, const std::string& priors_path,
              bool fused, const std::string& fusion_mode, int argc, char** argv) {
    LabelingConfig labeling = wflags.labeling();
    SpectrogramConfig spec_cfg;
    if (fused) {
        if (priors_path.empty()) {
            throw std::invalid_argument("train: --fused requires --priors");
        }
        PriorsFile priors = load_priors(priors_path);
        if (fusion_mode != "logit") {
            throw std::invalid_argument("train: training-time fusion is logit-space (Eq.-8 style); "
                                        "probability mode is evaluate-only");
        }
        cfg.fusion = FusionTraining{priors.tod, priors.dow};
    }

    RunManifest manifest = base_manifest("train", argc, argv, cfg.seed);
    std::vector<LabeledWindow> windows;
    for (const std::string& meta : list_recordings(data_dir)) {
        EEGRecording rec = load_recording(meta);
        PatientRefSplit split = split_refs(rec, labeling, wflags.test_seizures);
        Rng cap_rng = Rng::stream(cfg.seed, {21, std::hash<std::string>{}(rec.patient_id)});
        std::vector<WindowRef> refs = cap_refs_per_class(split.train_refs, per_patient_cap, cap_rng);
        for (const WindowRef& ref : refs) {
            windows.push_back(extract_window(rec, ref, labeling, spec_cfg));
        }
        manifest.input_digests[meta] = sha256_file(meta);
        std::cout << rec.patient_id << ": " << refs.size() << " training windows\n";
    }
    if (!priors_path.empty()) manifest.input_digests[priors_path] = sha256_file(priors_path);

    TrainResult result = train(windows, cfg);
    save_checkpoint(result.net, out_path, cfg.seed);
    const std::string report_path = out_path + ".train.jsonl";
    write_text_atomic(result.report.to_jsonl(), report_path);

    manifest.config = cfg.to_json();
    manifest.config["per_patient_window_cap"] = per_patient_cap;
    manifest.config["window_sec"] = wflags.window_sec;
    manifest.config["step_sec"] = wflags.step_sec;
    manifest.config["test_seizures"] = wflags.test_seizures;
    manifest.outputs = {out_path, report_path};
    write_manifest(manifest, out_path);

    const EpochStats& last = result.report.epochs.back();
    std::cout << "trained " << (cfg.deterministic ? "CNN" : "BCNN") << " on "
              << result.report.n_examples << " windows; final loss " << last.mean_neg_elbo
              << ", train accuracy " << result.report.final_train_accuracy << "\n"
              << "checkpoint: " << out_path << "\n";
    return 0;
}

int run_evaluate(const std::string& data_dir, const std::string& cnn_path,
                 const std::string& bcnn_path, const std::string& priors_path,
                 const std::string& out_path, EvalConfig cfg, const WindowFlags& wflags,
                 int argc, char** argv) {
    LabelingConfig labeling = wflags.labeling();
    SpectrogramConfig spec_cfg;
    BayesNet cnn = load_checkpoint(cnn_path);
    BayesNet bcnn = load_checkpoint(bcnn_path);
    PriorsFile priors = load_priors(priors_path);

    RunManifest manifest = base_manifest("evaluate", argc, argv, cfg.seed);
    manifest.input_digests[cnn_path] = sha256_file(cnn_path);
    manifest.input_digests[bcnn_path] = sha256_file(bcnn_path);
    manifest.input_digests[priors_path] = sha256_file(priors_path);

    std::vector<PatientTestSet> patients;
    for (const std::string& meta : list_recordings(data_dir)) {
        EEGRecording rec = load_recording(meta);
        PatientRefSplit split = split_refs(rec, labeling, wflags.test_seizures);
        Rng cap_rng = Rng::stream(cfg.seed, {22, std::hash<std::string>{}(rec.patient_id)});
        std::vector<WindowRef> refs =
            cap_refs_per_class(split.test_refs, cfg.max_test_windows_per_class, cap_rng);
        PatientTestSet set;
        set.patient_id = rec.patient_id;
        for (const WindowRef& ref : refs) {
            set.windows.push_back(extract_window(rec, ref, labeling, spec_cfg));
        }
        manifest.input_digests[meta] = sha256_file(meta);
        patients.push_back(std::move(set));
    }

    EvalReport report = evaluate_arms(patients, cnn, bcnn, priors.tod, priors.dow, cfg);
    write_json_atomic(report.to_json(), out_path);
    manifest.config = cfg.to_json();
    manifest.config["window_sec"] = wflags.window_sec;
    manifest.config["step_sec"] = wflags.step_sec;
    manifest.config["test_seizures"] = wflags.test_seizures;
    manifest.outputs = {out_path};
    write_manifest(manifest, out_path);

    for (const char* arm : kArmNames) {
        std::printf("%-12s macro AUC %.4f\n", arm, report.macro_auc.at(arm));
    }
    std::cout << "report: " << out_path << "\n";
    return 0;
}

int run_timeline(const std::string& rec_path, const std::string& ckpt_path,
                 const std::string& priors_path, const std::string& out_path, TimelineConfig cfg,
                 int argc, char** argv) {
    EEGRecording rec = load_recording(rec_path);
    BayesNet net = load_checkpoint(ckpt_path);
    SpectrogramConfig spec_cfg;
    std::optional<PriorDensity> tod, dow;
    if (!priors_path.empty()) {
        PriorsFile priors = load_priors(priors_path);
        tod = priors.tod;
        dow = priors.dow;
    }
    std::vector<TimelinePoint> points = timeline(rec, net, spec_cfg, tod, dow, cfg);
    write_timeline_csv(points, out_path);

    json onsets = json::array();
    for (UnixTime o : rec.seizure_onsets) onsets.push_back(iso8601_utc(o));
    const std::string onsets_path = out_path + ".onsets.json";
    write_json_atomic({{"patient_id", rec.patient_id}, {"seizure_onsets", onsets}}, onsets_path);

    RunManifest manifest = base_manifest("timeline", argc, argv, cfg.seed);
    manifest.input_digests[rec_path] = sha256_file(rec_path);
    manifest.input_digests[ckpt_path] = sha256_file(ckpt_path);
    if (!priors_path.empty()) manifest.input_digests[priors_path] = sha256_file(priors_path);
    manifest.config = {{"window_sec", cfg.window_sec},
                       {"step_sec", cfg.window_step_sec},
                       {"mc_samples", cfg.mc_samples},
                       {"threads", cfg.threads},
                       {"fused", cfg.fused},
                       {"fusion_mode", to_string(cfg.fusion_mode)}};
    manifest.outputs = {out_path, onsets_path};
    write_manifest(manifest, out_path);
    std::cout << points.size() << " timeline points -> " << out_path << "\n";
    return 0;
}

int run_inspect(const std::string& ckpt_path) {
    json manifest = checkpoint_manifest(ckpt_path);
    BayesNet net = load_checkpoint(ckpt_path);
    std::cout << manifest.dump(2) << "\n";
    int li = 0;
    for (const BayesLayer& layer : net.layers()) {
        const auto& mu = layer.weight.mu.data();
        double mu_min = mu[0], mu_max = mu[0], mu_sum = 0;
        for (double v : mu) {
            mu_min = std::min(mu_min, v);
            mu_max = std::max(mu_max, v);
            mu_sum += v;
        }
        double sig_sum = 0;
        for (double r : layer.weight.rho.data()) sig_sum += std::log1p(std::exp(r));
        std::printf("layer %d %-6s weight %s  mu[min %.4f max %.4f mean %.4f]  mean sigma %.4f\n",
                    li++, layer.kind == LayerKind::Conv2d ? "conv2d" : "dense",
                    shape_str(layer.weight.mu.shape()).c_str(), mu_min, mu_max,
                    mu_sum / static_cast<double>(mu.size()),
                    sig_sum / static_cast<double>(layer.weight.rho.size()));
    }
    std::printf("total parameters: %lld (x2 for mu/rho)\n",
                static_cast<long long>(net.parameter_count()));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"riskcast: probabilistic seizure-risk forecasting toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic EEG dataset");
    std::string synth_spec, synth_out = "data";
    std::uint64_t synth_seed = 0;
    synth->add_option("--spec", synth_spec, "synthetic spec JSON (defaults when omitted)");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "generator seed")->required();

    // fit-priors
    auto* fitp = app.add_subcommand("fit-priors", "fit ToD/DoW event-time priors on training folds");
    std::string fitp_data, fitp_out = "priors.json", fitp_mode = "circular";
    double fitp_bandwidth = 0.0;
    bool fitp_has_bw = false;
    std::uint64_t fitp_seed = 0;
    WindowFlags fitp_wflags;
    fitp->add_option("--data", fitp_data, "recordings directory")->required();
    fitp->add_option("--out", fitp_out, "output priors JSON")->required();
    fitp->add_option("--bandwidth", fitp_bandwidth, "KDE bandwidth (default: Scott's rule)")
        ->each([&](const std::string&) { fitp_has_bw = true; });
    fitp->add_option("--mode", fitp_mode, "circular|plain")->check(CLI::IsMember({"circular", "plain"}));
    fitp->add_option("--seed", fitp_seed, "recorded in the manifest");
    add_window_flags(fitp, fitp_wflags);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a BCNN (or the sigma=0 CNN baseline)");
    std::string train_data, train_out = "model.bcnn", train_priors, train_fusion_mode = "logit";
    TrainConfig train_cfg;
    train_cfg.epochs = 10;
    WindowFlags train_wflags;
    int train_cap = 150;
    bool train_fused = false;
    std::string train_schedule = "constant";
    train_cmd->add_option("--data", train_data, "recordings directory")->required();
    train_cmd->add_option("--out", train_out, "checkpoint path")->required();
    train_cmd->add_option("--seed", train_cfg.seed, "training seed")->required();
    train_cmd->add_option("--epochs", train_cfg.epochs, "training epochs");
    train_cmd->add_option("--batch-size", train_cfg.batch_size, "minibatch size");
    train_cmd->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
    train_cmd->add_option("--arch", train_cfg.arch_preset, "compact|standard")
        ->check(CLI::IsMember({"compact", "standard"}));
    train_cmd->add_option("--kl-schedule", train_schedule, "constant|linear-anneal")
        ->check(CLI::IsMember({"constant", "linear-anneal"}));
    train_cmd->add_option("--kl-scale", train_cfg.kl_scale,
                          "multiplier on the 1/num_batches KL weight");
    train_cmd->add_option("--balance", train_cfg.balance_ratio,
                          "majority-per-minority target ratio (0 disables)");
    train_cmd->add_option("--max-windows-per-class", train_cap,
                          "per-patient per-class training window cap (0 = all)");
    train_cmd->add_flag("--deterministic", train_cfg.deterministic,
                        "train the sigma=0 CNN baseline");
    train_cmd->add_flag("--fused", train_fused, "inject ToD/DoW fusion during training");
    train_cmd->add_option("--priors", train_priors, "priors JSON for --fused");
    train_cmd->add_option("--fusion-mode", train_fusion_mode, "logit (training supports logit only)");
    add_window_flags(train_cmd, train_wflags);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "AUC for the CNN / BCNN / +ToD / +ToD+DoW arms");
    std::string eval_data, eval_cnn, eval_bcnn, eval_priors, eval_out = "report.json";
    std::string eval_fusion_mode = "probability";
    EvalConfig eval_cfg;
    WindowFlags eval_wflags;
    eval_cmd->add_option("--data", eval_data, "recordings directory")->required();
    eval_cmd->add_option("--cnn-checkpoint", eval_cnn, "deterministic CNN checkpoint")->required();
    eval_cmd->add_option("--checkpoint", eval_bcnn, "BCNN checkpoint")->required();
    eval_cmd->add_option("--priors", eval_priors, "priors JSON")->required();
    eval_cmd->add_option("--out", eval_out, "report JSON path")->required();
    eval_cmd->add_option("--seed", eval_cfg.seed, "MC sampling seed")->required();
    eval_cmd->add_option("--mc-samples", eval_cfg.mc_samples, "MC draws per window");
    eval_cmd->add_option("--threads", eval_cfg.threads, "worker cap");
    eval_cmd->add_option("--fusion-mode", eval_fusion_mode, "probability|logit")
        ->check(CLI::IsMember({"probability", "logit"}));
    eval_cmd->add_option("--max-test-windows-per-class", eval_cfg.max_test_windows_per_class,
                         "per-patient per-class test window cap (0 = all)");
    add_window_flags(eval_cmd, eval_wflags);

    // timeline
    auto* tl_cmd = app.add_subcommand("timeline", "continuous-recording risk timeline CSV");
    std::string tl_rec, tl_ckpt, tl_priors, tl_out = "timeline.csv", tl_fusion_mode = "probability";
    TimelineConfig tl_cfg;
    tl_cmd->add_option("--recording", tl_rec, "recording metadata JSON")->required();
    tl_cmd->add_option("--checkpoint", tl_ckpt, "checkpoint path")->required();
    tl_cmd->add_option("--out", tl_out, "CSV output path")->required();
    tl_cmd->add_option("--seed", tl_cfg.seed, "MC sampling seed")->required();
    tl_cmd->add_option("--priors", tl_priors, "priors JSON (required with --fused)");
    tl_cmd->add_flag("--fused", tl_cfg.fused, "apply ToD/DoW fusion per window");
    tl_cmd->add_option("--fusion-mode", tl_fusion_mode, "probability|logit")
        ->check(CLI::IsMember({"probability", "logit"}));
    tl_cmd->add_option("--mc-samples", tl_cfg.mc_samples, "MC draws per window");
    tl_cmd->add_option("--threads", tl_cfg.threads, "worker cap");
    tl_cmd->add_option("--window-sec", tl_cfg.window_sec, "window length in seconds");
    tl_cmd->add_option("--step-sec", tl_cfg.window_step_sec, "window step in seconds");

    // inspect-checkpoint
    auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "print checkpoint manifest and stats");
    std::string inspect_ckpt;
    inspect_cmd->add_option("--checkpoint", inspect_ckpt, "checkpoint path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth) return run_synth(synth_spec, synth_out, synth_seed, argc, argv);
        if (*fitp) {
            return run_fit_priors(fitp_data, fitp_out, fitp_wflags,
                                  fitp_has_bw ? std::optional<double>(fitp_bandwidth) : std::nullopt,
                                  fitp_mode, fitp_seed, argc, argv);
        }
        if (*train_cmd) {
            train_cfg.kl_schedule = kl_schedule_from_string(train_schedule);
            return run_train(train_data, train_out, train_cfg, train_wflags, train_cap, train_priors,
                             train_fused, train_fusion_mode, argc, argv);
        }
        if (*eval_cmd) {
            eval_cfg.fusion_mode = fusion_mode_from_string(eval_fusion_mode);
            return run_evaluate(eval_data, eval_cnn, eval_bcnn, eval_priors, eval_out, eval_cfg,
                                eval_wflags, argc, argv);
        }
        if (*tl_cmd) {
            tl_cfg.fusion_mode = fusion_mode_from_string(tl_fusion_mode);
            return run_timeline(tl_rec, tl_ckpt, tl_priors, tl_out, tl_cfg, argc, argv);
        }
        if (*inspect_cmd) return run_inspect(inspect_ckpt);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
