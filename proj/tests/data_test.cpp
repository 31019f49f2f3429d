#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "riskcast/data.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "riskcast/priors.hpp"
#include "riskcast/rng.hpp"

using namespace riskcast;

namespace {

constexpr double kMin = 60.0;
constexpr double kHour = 3600.0;

EEGRecording flat_recording(double hours, double fs, int channels, UnixTime start,
                            std::vector<UnixTime> onsets) {
    EEGRecording rec;
    rec.patient_id = "test";
    rec.sampling_rate_hz = fs;
    rec.n_channels = channels;
    rec.start_time = start;
    rec.samples.assign(static_cast<std::size_t>(hours * kHour * fs) * channels, 0.0f);
    rec.seizure_onsets = std::move(onsets);
    return rec;
}

}  // namespace

TEST_CASE("leading_seizures basics") {
    CHECK(leading_seizures({}).empty());
    const UnixTime t = 1e9;
    CHECK(leading_seizures({t, t + 20 * kMin, t + 100 * kMin}) ==
          std::vector<UnixTime>{t, t + 100 * kMin});
    // exactly 30 minutes apart is not merged ("less than 30 min")
    CHECK(leading_seizures({t, t + 30 * kMin}).size() == 2);
    CHECK(leading_seizures({t, t + 30 * kMin - 1.0}).size() == 1);
    CHECK_THROWS_AS(leading_seizures({t + 10, t}), std::invalid_argument);
    CHECK_THROWS_AS(leading_seizures({t, t}), std::invalid_argument);
}

TEST_CASE("leading_seizures chains through cluster members") {
    const UnixTime t = 2e9;
    // each onset within 30 min of the previous one: one cluster
    std::vector<UnixTime> onsets;
    for (int i = 0; i < 5; ++i) onsets.push_back(t + i * 20 * kMin);
    CHECK(leading_seizures(onsets) == std::vector<UnixTime>{t});
}

TEST_CASE("Table-I-style counts: 22 seizures reduce to 11 and to 21") {
    const UnixTime t = 1.4e9;
    // Pat8-like: 11 pairs, partners 25 min apart, pairs 2 h apart
    std::vector<UnixTime> pat8;
    for (int i = 0; i < 11; ++i) {
        pat8.push_back(t + i * 2 * kHour);
        pat8.push_back(t + i * 2 * kHour + 25 * kMin);
    }
    CHECK(pat8.size() == 22);
    CHECK(leading_seizures(pat8).size() == 11);

    // Pat19-like: 22 seizures with exactly one short gap
    std::vector<UnixTime> pat19;
    for (int i = 0; i < 21; ++i) pat19.push_back(t + i * kHour);
    pat19.push_back(t + 20 * kHour + 10 * kMin);
    std::sort(pat19.begin(), pat19.end());
    CHECK(pat19.size() == 22);
    CHECK(leading_seizures(pat19).size() == 21);
}

TEST_CASE("leading_seizures is idempotent and never grows") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::set<double> onset_set;
        int n = static_cast<int>(rng.uniform_int(0, 25));
        while (static_cast<int>(onset_set.size()) < n) {
            onset_set.insert(1e9 + std::floor(rng.uniform(0, 72 * kHour)));
        }
        std::vector<UnixTime> onsets(onset_set.begin(), onset_set.end());
        std::vector<UnixTime> lead = leading_seizures(onsets);
        CHECK(lead.size() <= onsets.size());
        CHECK(leading_seizures(lead) == lead);
    }
}

TEST_CASE("label_windows around a single onset at hour 10") {
    const UnixTime start = parse_iso8601("2015-01-05T00:00:00Z");
    const UnixTime onset = start + 10 * kHour;
    EEGRecording rec = flat_recording(12, 8.0, 1, start, {onset});
    LabelingConfig cfg;
    std::vector<WindowRef> refs = label_window_refs(rec, cfg);

    std::vector<WindowRef> pre;
    for (const WindowRef& r : refs) {
        if (r.label == WindowLabel::Preictal) pre.push_back(r);
    }
    REQUIRE_FALSE(pre.empty());
    CHECK(iso8601_utc(pre.front().start_time) == "2015-01-05T09:25:00Z");
    CHECK(iso8601_utc(pre.back().start_time + cfg.window_sec) == "2015-01-05T09:55:00Z");
    // (30*60 - 30)/15 + 1 preictal windows on an aligned grid
    CHECK(pre.size() == 119);

    for (const WindowRef& r : refs) {
        double rel = r.start_time - start;
        if (r.label == WindowLabel::Interictal) {
            CHECK(rel + cfg.window_sec <= 6 * kHour + 1e-6);
        }
        // onset - 2 h sits in the discarded zone
        CHECK(std::abs(rel - 8 * kHour) > 1e-9);
    }
}

TEST_CASE("windows never straddle the recording boundary") {
    EEGRecording rec = flat_recording(0.01, 8.0, 1, 1e9, {});  // 36 s
    LabelingConfig cfg;
    std::vector<WindowRef> refs = label_window_refs(rec, cfg);
    CHECK(refs.size() == 1);  // only the [0, 30) window fits
    CHECK(refs.front().start_sample == 0);
}

TEST_CASE("labels re-derived from first principles on random onset layouts") {
    Rng rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        const UnixTime start = 1.4e9 + std::floor(rng.uniform(0, kHour));
        const double hours = 30.0;
        int n_onsets = static_cast<int>(rng.uniform_int(1, 5));
        std::set<double> onset_set;
        while (static_cast<int>(onset_set.size()) < n_onsets) {
            onset_set.insert(start + std::floor(rng.uniform(1 * kHour, (hours - 1) * kHour)));
        }
        EEGRecording rec = flat_recording(hours, 4.0, 1, start,
                                          std::vector<UnixTime>(onset_set.begin(), onset_set.end()));
        LabelingConfig cfg;
        std::vector<WindowRef> refs = label_window_refs(rec, cfg);
        std::vector<UnixTime> lead = leading_seizures(rec.seizure_onsets, cfg.leading_merge_min);

        std::set<std::int64_t> seen;
        for (const WindowRef& r : refs) {
            CHECK(seen.insert(r.start_sample).second);  // disjoint classes by construction
            double t0 = r.start_time, t1 = t0 + cfg.window_sec;
            bool pre = false;
            for (UnixTime o : lead) {
                if (t0 >= o - 35 * kMin - 1e-6 && t1 <= o - 5 * kMin + 1e-6) pre = true;
            }
            bool inter = true;
            for (UnixTime o : rec.seizure_onsets) {
                if (!(t1 <= o - 4 * kHour + 1e-6 || t0 >= o + 4 * kHour - 1e-6)) inter = false;
            }
            if (r.label == WindowLabel::Preictal) {
                CHECK(pre);
            } else {
                CHECK(inter);
                CHECK_FALSE(pre);
            }
        }

        // bit-identical rerun
        std::vector<WindowRef> again = label_window_refs(rec, cfg);
        REQUIRE(again.size() == refs.size());
        for (std::size_t i = 0; i < refs.size(); ++i) {
            CHECK(again[i].start_sample == refs[i].start_sample);
            CHECK(again[i].start_time == refs[i].start_time);
            CHECK(again[i].label == refs[i].label);
        }
    }
}

TEST_CASE("preictal window count matches the grid-counting oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const UnixTime start = 1.4e9;
        const double hours = 20.0;
        const UnixTime onset = start + std::floor(rng.uniform(6 * kHour, 14 * kHour));
        EEGRecording rec = flat_recording(hours, 4.0, 1, start, {onset});
        LabelingConfig cfg;
        std::vector<WindowRef> refs = label_window_refs(rec, cfg);
        std::int64_t got = 0;
        for (const WindowRef& r : refs) {
            if (r.label == WindowLabel::Preictal) ++got;
        }
        // oracle: count grid starts s*step with s*step >= lo and s*step + w <= hi
        const double lo = onset - start - 35 * kMin, hi = onset - start - 5 * kMin;
        std::int64_t expected = 0;
        for (std::int64_t s = 0;; ++s) {
            double t0 = static_cast<double>(s) * cfg.window_step_sec;
            if (t0 + cfg.window_sec > hours * kHour) break;
            if (t0 >= lo - 1e-6 && t0 + cfg.window_sec <= hi + 1e-6) ++expected;
        }
        CHECK(got == expected);
        CHECK(expected >= 118);  // floor((1770 - delta)/15) + 1 for any grid offset
        CHECK(expected <= 119);
    }
}

TEST_CASE("spectrogram finds a pure tone in the right bin") {
    const double fs = 256.0;
    SpectrogramConfig cfg;
    std::vector<std::vector<double>> sig(1, std::vector<double>(1024));
    for (std::size_t i = 0; i < sig[0].size(); ++i) {
        sig[0][i] = std::sin(2.0 * 3.14159265358979323846 * 10.0 * static_cast<double>(i) / fs);
    }
    Tensor out = spectrogram(sig, fs, cfg);
    std::vector<double> freqs = spectrogram_bin_frequencies(fs, cfg);
    REQUIRE(out.shape()[0] == 1);
    const int F = out.shape()[1], T = out.shape()[2];
    REQUIRE(static_cast<int>(freqs.size()) == F);
    for (int t = 0; t < T; ++t) {
        int argmax = 0;
        double best = -1;
        for (int f = 0; f < F; ++f) {
            double v = out.data()[static_cast<std::size_t>(f) * T + t];
            if (v > best) {
                best = v;
                argmax = f;
            }
        }
        CHECK(freqs[static_cast<std::size_t>(argmax)] == doctest::Approx(10.0));
    }
}

TEST_CASE("spectrogram of silence is exactly zero") {
    std::vector<std::vector<double>> sig(2, std::vector<double>(512, 0.0));
    Tensor out = spectrogram(sig, 64.0, SpectrogramConfig{});
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("spectrogram rejects too-short windows") {
    std::vector<std::vector<double>> sig(1, std::vector<double>(31));
    SpectrogramConfig cfg;
    cfg.fft_size = 64;
    CHECK_THROWS_AS(spectrogram(sig, 32.0, cfg), std::invalid_argument);
}

TEST_CASE("Parseval: spectral energy matches time-domain energy per frame") {
    Rng rng(4);
    const double fs = 64.0;
    const int nfft = 64;
    std::vector<std::vector<double>> sig(1, std::vector<double>(256));
    for (double& v : sig[0]) v = rng.normal();

    SpectrogramConfig cfg;
    cfg.fft_size = nfft;
    cfg.hop = nfft;  // non-overlapping frames
    cfg.fmin_hz = 0.0;
    cfg.fmax_hz = 1e9;
    cfg.log_compress = false;
    Tensor out = spectrogram(sig, fs, cfg);
    const int F = out.shape()[1], T = out.shape()[2];
    REQUIRE(F == nfft / 2 + 1);

    std::vector<double> hann(nfft);
    for (int i = 0; i < nfft; ++i) {
        hann[i] = 0.5 * (1.0 - std::cos(2.0 * 3.14159265358979323846 * i / (nfft - 1)));
    }
    for (int t = 0; t < T; ++t) {
        double spectral = 0.0;
        for (int f = 0; f < F; ++f) {
            double m = out.data()[static_cast<std::size_t>(f) * T + t];
            spectral += (f == 0 || f == nfft / 2) ? m * m : 2.0 * m * m;
        }
        double time_energy = 0.0;
        for (int i = 0; i < nfft; ++i) {
            double v = sig[0][static_cast<std::size_t>(t * nfft + i)] * hann[i];
            time_energy += v * v;
        }
        CHECK(spectral / nfft == doctest::Approx(time_energy).epsilon(0.01));
    }
}

TEST_CASE("synthetic onsets forced to hour 8 produce an hour-8 prior mode") {
    SyntheticSpec spec;
    spec.n_patients = 1;
    spec.hours_per_patient = 48;
    spec.sampling_rate_hz = 16;
    spec.n_channels = 1;
    spec.seizures_per_day = 1;
    spec.circadian_std_hours = 0.02;
    EEGRecording rec = synthesize_recording(spec, 0, 7);
    REQUIRE(rec.seizure_onsets.size() >= 2);
    std::vector<double> tods;
    for (UnixTime o : rec.seizure_onsets) tods.push_back(event_time_from_unix(o).tod_hours);
    for (double t : tods) CHECK(std::abs(t - 8.0) < 0.25);
    PriorDensity d = PriorDensity::fit(tods, PriorVariable::TimeOfDay, 0.5);
    double best_t = 0, best_v = -1;
    for (double t = 0; t < 24; t += 0.02) {
        if (d.evaluate(t) > best_v) {
            best_v = d.evaluate(t);
            best_t = t;
        }
    }
    CHECK(std::abs(best_t - 8.0) < 0.5 + 0.01);
}

TEST_CASE("synthetic dataset respects counts, margins and the leading identity") {
    SyntheticSpec spec;
    spec.n_patients = 3;
    spec.hours_per_patient = 24;
    spec.sampling_rate_hz = 16;
    spec.n_channels = 2;
    std::vector<EEGRecording> recs = synthesize_dataset(spec, 11);
    REQUIRE(recs.size() == 3);
    for (const EEGRecording& rec : recs) {
        CHECK(rec.seizure_onsets.size() == 3);  // 3 per day, 24 h
        std::vector<UnixTime> lead = leading_seizures(rec.seizure_onsets);
        CHECK(lead.size() <= rec.seizure_onsets.size());
        CHECK(lead.size() == rec.seizure_onsets.size());  // 50-min separation: nothing merges
        for (UnixTime o : rec.seizure_onsets) {
            CHECK(o - rec.start_time >= spec.first_onset_margin_hours * kHour - 1.0);
            CHECK(rec.end_time() - o >= spec.first_onset_margin_hours * kHour - 1.0);
            CHECK(o == std::floor(o));  // whole seconds survive the ISO round trip
        }
        for (std::size_t i = 1; i < rec.seizure_onsets.size(); ++i) {
            CHECK(rec.seizure_onsets[i] - rec.seizure_onsets[i - 1] >=
                  spec.min_onset_separation_min * kMin - 1.0);
        }
    }
    // distinct patients, distinct noise
    CHECK(recs[0].samples != recs[1].samples);
    CHECK(recs[0].start_time != recs[1].start_time);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
    SyntheticSpec spec;
    spec.n_patients = 1;
    spec.hours_per_patient = 24;
    spec.sampling_rate_hz = 16;
    spec.n_channels = 2;
    EEGRecording a = synthesize_recording(spec, 0, 42);
    EEGRecording b = synthesize_recording(spec, 0, 42);
    CHECK(a.samples == b.samples);
    CHECK(a.seizure_onsets == b.seizure_onsets);
    EEGRecording c = synthesize_recording(spec, 0, 43);
    CHECK(a.samples != c.samples);
}

TEST_CASE("infeasibly dense specs raise a generation error") {
    SyntheticSpec spec;
    spec.n_patients = 1;
    spec.hours_per_patient = 24;
    spec.sampling_rate_hz = 16;
    spec.n_channels = 1;
    spec.seizures_per_day = 40;
    CHECK_THROWS_AS(synthesize_recording(spec, 0, 1), std::runtime_error);
}

TEST_CASE("preictal band power rises ahead of the onset") {
    SyntheticSpec spec;
    spec.n_patients = 1;
    spec.hours_per_patient = 24;
    spec.sampling_rate_hz = 32;
    spec.n_channels = 4;
    spec.separability = 1.0;
    EEGRecording rec = synthesize_recording(spec, 0, 5);
    UnixTime onset = rec.seizure_onsets.front();

    SpectrogramConfig cfg;
    auto band_power = [&](UnixTime t0) {
        std::int64_t s = static_cast<std::int64_t>((t0 - rec.start_time) * rec.sampling_rate_hz);
        Tensor spec_t = spectrogram(rec, s, static_cast<std::int64_t>(30 * rec.sampling_rate_hz), cfg);
        std::vector<double> freqs = spectrogram_bin_frequencies(rec.sampling_rate_hz, cfg);
        const int F = spec_t.shape()[1], T = spec_t.shape()[2];
        double acc = 0;
        int count = 0;
        for (int c = 0; c < spec_t.shape()[0]; ++c) {
            for (int f = 0; f < F; ++f) {
                if (freqs[static_cast<std::size_t>(f)] < 4.0 || freqs[static_cast<std::size_t>(f)] > 8.0)
                    continue;
                for (int t = 0; t < T; ++t) {
                    acc += spec_t.data()[(static_cast<std::size_t>(c) * F + f) * T + t];
                    ++count;
                }
            }
        }
        return acc / count;
    };
    double pre = band_power(onset - 10 * kMin);
    double baseline = band_power(onset - 5 * kHour);
    CHECK(pre > 1.3 * baseline);
}

TEST_CASE("recording save/load round trip preserves samples and onsets") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "riskcast_rec_test";
    fs::remove_all(dir);

    SyntheticSpec spec;
    spec.n_patients = 1;
    spec.hours_per_patient = 12;
    spec.sampling_rate_hz = 16;
    spec.n_channels = 3;
    spec.first_onset_margin_hours = 2.0;
    spec.seizures_per_day = 4;
    EEGRecording rec = synthesize_recording(spec, 0, 9);
    std::string meta = save_recording(rec, dir.string());
    EEGRecording back = load_recording(meta);

    CHECK(back.patient_id == rec.patient_id);
    CHECK(back.sampling_rate_hz == rec.sampling_rate_hz);
    CHECK(back.n_channels == rec.n_channels);
    CHECK(back.start_time == rec.start_time);
    CHECK(back.samples == rec.samples);
    CHECK(back.seizure_onsets == rec.seizure_onsets);

    CHECK(list_recordings(dir.string()) == std::vector<std::string>{meta});
    fs::remove_all(dir);
}

TEST_CASE("synthetic spec JSON round trip") {
    SyntheticSpec spec;
    spec.n_patients = 4;
    spec.separability = 0.7;
    SyntheticSpec back = SyntheticSpec::from_json(spec.to_json());
    CHECK(back.n_patients == 4);
    CHECK(back.separability == 0.7);
    CHECK(back.sampling_rate_hz == spec.sampling_rate_hz);
    CHECK_THROWS_AS(SyntheticSpec::from_json({{"sampling_rate_hz", 2.0}}), std::invalid_argument);
}

TEST_CASE("labeling config validation") {
    LabelingConfig cfg;
    cfg.interictal_gap_hours = 0.5;  // below sph+sop
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    LabelingConfig ok;
    CHECK_NOTHROW(ok.validate());
}
