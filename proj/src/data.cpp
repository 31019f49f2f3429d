#include "riskcast/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "riskcast/rng.hpp"

namespace riskcast {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kTimeEps = 1e-6;  // seconds; absorbs double rounding on the window grid

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    std::size_t n = re.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::logic_error("fft: size must be a power of two");
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
        double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::size_t a = i + k, b = i + k + len / 2;
                double tr = re[b] * cr - im[b] * ci;
                double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

std::uint32_t read_u32le(const unsigned char* b) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void EEGRecording::validate() const {
    if (!(sampling_rate_hz > 0)) throw std::invalid_argument("recording: sampling rate must be > 0");
    if (n_channels < 1) throw std::invalid_argument("recording: needs at least one channel");
    if (samples.size() % static_cast<std::size_t>(n_channels) != 0) {
        throw std::invalid_argument("recording: sample buffer not divisible by channel count");
    }
    UnixTime hi = end_time();
    UnixTime prev = -std::numeric_limits<double>::infinity();
    for (UnixTime o : seizure_onsets) {
        if (o <= prev) throw std::invalid_argument("recording: onsets must be strictly increasing");
        if (o < start_time - kTimeEps || o > hi + kTimeEps) {
            throw std::invalid_argument("recording: onset " + iso8601_utc(o) + " outside recording");
        }
        prev = o;
    }
}

void LabelingConfig::validate() const {
    if (!(sph_min > 0)) throw std::invalid_argument("labeling: sph_min must be > 0");
    if (!(sop_min > 0)) throw std::invalid_argument("labeling: sop_min must be > 0");
    if (!(leading_merge_min >= 0)) throw std::invalid_argument("labeling: merge must be >= 0");
    if (!(interictal_gap_hours * 60.0 > sph_min + sop_min)) {
        throw std::invalid_argument("labeling: interictal gap must exceed sph+sop");
    }
    if (!(window_sec > 0) || !(window_step_sec > 0)) {
        throw std::invalid_argument("labeling: window/step must be > 0");
    }
}

std::vector<UnixTime> leading_seizures(const std::vector<UnixTime>& onsets, double merge_min) {
    for (std::size_t i = 1; i < onsets.size(); ++i) {
        if (onsets[i] <= onsets[i - 1]) {
            throw std::invalid_argument("leading_seizures: onsets must be sorted strictly ascending");
        }
    }
    std::vector<UnixTime> leading;
    double merge_sec = merge_min * 60.0;
    double cluster_end = 0.0;
    for (UnixTime o : onsets) {
        if (leading.empty() || o - cluster_end >= merge_sec) {
            leading.push_back(o);
        }
        cluster_end = o;
    }
    return leading;
}

std::vector<WindowRef> label_window_refs(const EEGRecording& rec, const LabelingConfig& cfg) {
    cfg.validate();
    rec.validate();
    const double fs = rec.sampling_rate_hz;
    const std::int64_t wsamp = static_cast<std::int64_t>(std::llround(cfg.window_sec * fs));
    const std::int64_t step = static_cast<std::int64_t>(std::llround(cfg.window_step_sec * fs));
    if (wsamp < 1 || step < 1) throw std::invalid_argument("labeling: window/step below one sample");

    const std::vector<UnixTime> leading = leading_seizures(rec.seizure_onsets, cfg.leading_merge_min);
    const double pre_lo = (cfg.sph_min + cfg.sop_min) * 60.0;
    const double pre_hi = cfg.sph_min * 60.0;
    const double gap = cfg.interictal_gap_hours * 3600.0;

    std::vector<WindowRef> refs;
    for (std::int64_t s = 0; s + wsamp <= rec.n_samples(); s += step) {
        const UnixTime t0 = rec.start_time + static_cast<double>(s) / fs;
        const UnixTime t1 = t0 + cfg.window_sec;
        bool preictal = false;
        for (UnixTime o : leading) {
            if (t0 >= o - pre_lo - kTimeEps && t1 <= o - pre_hi + kTimeEps) {
                preictal = true;
                break;
            }
        }
        if (preictal) {
            refs.push_back({s, t0, WindowLabel::Preictal});
            continue;
        }
        bool interictal = true;
        for (UnixTime o : rec.seizure_onsets) {
            if (!(t1 <= o - gap + kTimeEps || t0 >= o + gap - kTimeEps)) {
                interictal = false;
                break;
            }
        }
        if (interictal) refs.push_back({s, t0, WindowLabel::Interictal});
    }
    return refs;
}

int SpectrogramConfig::resolved_fft(double sampling_rate_hz) const {
    if (fft_size > 0) {
        if ((fft_size & (fft_size - 1)) != 0) {
            throw std::invalid_argument("spectrogram: fft_size must be a power of two");
        }
        return fft_size;
    }
    int n = 1;
    while (n < static_cast<int>(std::llround(sampling_rate_hz))) n <<= 1;
    return std::max(n, 8);
}

int SpectrogramConfig::resolved_hop(double sampling_rate_hz) const {
    return hop > 0 ? hop : resolved_fft(sampling_rate_hz) / 2;
}

std::vector<double> spectrogram_bin_frequencies(double sampling_rate_hz, const SpectrogramConfig& cfg) {
    int nfft = cfg.resolved_fft(sampling_rate_hz);
    double fmax = std::min(cfg.fmax_hz, sampling_rate_hz / 2.0);
    std::vector<double> freqs;
    for (int k = 0; k <= nfft / 2; ++k) {
        double f = static_cast<double>(k) * sampling_rate_hz / nfft;
        if (f >= cfg.fmin_hz && f <= fmax) freqs.push_back(f);
    }
    if (freqs.empty()) {
        throw std::invalid_argument("spectrogram: no frequency bins in [" + std::to_string(cfg.fmin_hz) +
                                    ", " + std::to_string(fmax) + "] Hz");
    }
    return freqs;
}

Tensor spectrogram(const std::vector<std::vector<double>>& channels, double sampling_rate_hz,
                   const SpectrogramConfig& cfg) {
    if (channels.empty()) throw std::invalid_argument("spectrogram: no channels");
    const int nfft = cfg.resolved_fft(sampling_rate_hz);
    const int hop = cfg.resolved_hop(sampling_rate_hz);
    const std::int64_t n = static_cast<std::int64_t>(channels[0].size());
    if (n < nfft) {
        throw std::invalid_argument("spectrogram: window of " + std::to_string(n) +
                                    " samples shorter than FFT size " + std::to_string(nfft));
    }
    for (const auto& ch : channels) {
        if (static_cast<std::int64_t>(ch.size()) != n) {
            throw std::invalid_argument("spectrogram: ragged channel lengths");
        }
    }
    const int frames = static_cast<int>((n - nfft) / hop) + 1;

    std::vector<double> hann(static_cast<std::size_t>(nfft));
    for (int i = 0; i < nfft; ++i) {
        hann[i] = 0.5 * (1.0 - std::cos(2.0 * 3.14159265358979323846 * i / (nfft - 1)));
    }

    double fmax = std::min(cfg.fmax_hz, sampling_rate_hz / 2.0);
    std::vector<int> bins;
    for (int k = 0; k <= nfft / 2; ++k) {
        double f = static_cast<double>(k) * sampling_rate_hz / nfft;
        if (f >= cfg.fmin_hz && f <= fmax) bins.push_back(k);
    }
    if (bins.empty()) throw std::invalid_argument("spectrogram: no frequency bins kept");

    const int C = static_cast<int>(channels.size());
    const int F = static_cast<int>(bins.size());
    std::vector<double> out(static_cast<std::size_t>(C) * F * frames);
    std::vector<double> re(static_cast<std::size_t>(nfft)), im(static_cast<std::size_t>(nfft));

    for (int c = 0; c < C; ++c) {
        const std::vector<double>& x = channels[static_cast<std::size_t>(c)];
        for (int t = 0; t < frames; ++t) {
            const double* seg = x.data() + static_cast<std::size_t>(t) * hop;
            for (int i = 0; i < nfft; ++i) {
                re[i] = seg[i] * hann[i];
                im[i] = 0.0;
            }
            fft_radix2(re, im);
            for (int fi = 0; fi < F; ++fi) {
                int k = bins[static_cast<std::size_t>(fi)];
                double mag = std::hypot(re[k], im[k]);
                if (cfg.log_compress) mag = std::log1p(mag);
                out[(static_cast<std::size_t>(c) * F + fi) * frames + t] = mag;
            }
        }
    }
    return Tensor::from_data(std::move(out), {C, F, frames});
}

Tensor spectrogram(const EEGRecording& rec, std::int64_t start_sample, std::int64_t n_samples,
                   const SpectrogramConfig& cfg) {
    if (start_sample < 0 || start_sample + n_samples > rec.n_samples()) {
        throw std::out_of_range("spectrogram: sample range outside recording");
    }
    std::vector<std::vector<double>> channels(static_cast<std::size_t>(rec.n_channels));
    for (int c = 0; c < rec.n_channels; ++c) {
        const float* p = rec.channel(c) + start_sample;
        channels[static_cast<std::size_t>(c)].assign(p, p + n_samples);
    }
    return spectrogram(channels, rec.sampling_rate_hz, cfg);
}

LabeledWindow extract_window(const EEGRecording& rec, const WindowRef& ref, const LabelingConfig& cfg,
                             const SpectrogramConfig& spec_cfg) {
    const std::int64_t wsamp = static_cast<std::int64_t>(std::llround(cfg.window_sec * rec.sampling_rate_hz));
    LabeledWindow w;
    w.features = spectrogram(rec, ref.start_sample, wsamp, spec_cfg);
    w.label = ref.label;
    w.window_start = ref.start_time;
    w.patient_id = rec.patient_id;
    return w;
}

std::vector<LabeledWindow> label_windows(const EEGRecording& rec, const LabelingConfig& cfg,
                                         const SpectrogramConfig& spec_cfg) {
    std::vector<LabeledWindow> out;
    for (const WindowRef& ref : label_window_refs(rec, cfg)) {
        out.push_back(extract_window(rec, ref, cfg, spec_cfg));
    }
    return out;
}

json SyntheticSpec::to_json() const {
    return {{"n_patients", n_patients},
            {"hours_per_patient", hours_per_patient},
            {"sampling_rate_hz", sampling_rate_hz},
            {"n_channels", n_channels},
            {"seizures_per_day", seizures_per_day},
            {"circadian_peak_hour", circadian_peak_hour},
            {"circadian_std_hours", circadian_std_hours},
            {"min_onset_separation_min", min_onset_separation_min},
            {"first_onset_margin_hours", first_onset_margin_hours},
            {"preictal_lead_min", preictal_lead_min},
            {"band_low_hz", band_low_hz},
            {"band_high_hz", band_high_hz},
            {"separability", separability},
            {"base_start_time", base_start_time},
            {"start_stagger_hours", start_stagger_hours}};
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
    SyntheticSpec s;
    s.n_patients = j.value("n_patients", s.n_patients);
    s.hours_per_patient = j.value("hours_per_patient", s.hours_per_patient);
    s.sampling_rate_hz = j.value("sampling_rate_hz", s.sampling_rate_hz);
    s.n_channels = j.value("n_channels", s.n_channels);
    s.seizures_per_day = j.value("seizures_per_day", s.seizures_per_day);
    s.circadian_peak_hour = j.value("circadian_peak_hour", s.circadian_peak_hour);
    s.circadian_std_hours = j.value("circadian_std_hours", s.circadian_std_hours);
    s.min_onset_separation_min = j.value("min_onset_separation_min", s.min_onset_separation_min);
    s.first_onset_margin_hours = j.value("first_onset_margin_hours", s.first_onset_margin_hours);
    s.preictal_lead_min = j.value("preictal_lead_min", s.preictal_lead_min);
    s.band_low_hz = j.value("band_low_hz", s.band_low_hz);
    s.band_high_hz = j.value("band_high_hz", s.band_high_hz);
    s.separability = j.value("separability", s.separability);
    s.base_start_time = j.value("base_start_time", s.base_start_time);
    s.start_stagger_hours = j.value("start_stagger_hours", s.start_stagger_hours);
    s.validate();
    return s;
}

void SyntheticSpec::validate() const {
    if (n_patients < 1) throw std::invalid_argument("synthetic spec: n_patients must be >= 1");
    if (!(hours_per_patient > 0)) throw std::invalid_argument("synthetic spec: hours must be > 0");
    if (!(sampling_rate_hz >= 8)) throw std::invalid_argument("synthetic spec: sampling rate too low");
    if (n_channels < 1) throw std::invalid_argument("synthetic spec: needs at least one channel");
    if (!(seizures_per_day > 0)) throw std::invalid_argument("synthetic spec: seizure rate must be > 0");
    if (!(band_high_hz > band_low_hz) || band_high_hz > sampling_rate_hz / 2.0) {
        throw std::invalid_argument("synthetic spec: signature band must fit below Nyquist");
    }
    if (separability < 0) throw std::invalid_argument("synthetic spec: separability must be >= 0");
    if (!(min_onset_separation_min > 0)) {
        throw std::invalid_argument("synthetic spec: onset separation must be > 0");
    }
    parse_iso8601(base_start_time);
}

namespace {

// Kellet's economy pink-noise filter; ~unit variance after the fixed scale.
class PinkNoise {
  public:
    explicit PinkNoise(Rng& rng) : rng_(rng) {}
    double next() {
        double w = rng_.normal();
        b0_ = 0.99765 * b0_ + w * 0.0990460;
        b1_ = 0.96300 * b1_ + w * 0.2965164;
        b2_ = 0.57000 * b2_ + w * 1.0526913;
        return (b0_ + b1_ + b2_ + w * 0.1848) * 0.42;
    }

  private:
    Rng& rng_;
    double b0_ = 0, b1_ = 0, b2_ = 0;
};

std::vector<UnixTime> place_onsets(const SyntheticSpec& spec, UnixTime start, UnixTime end,
                                   Rng& rng) {
    const int target = std::max(
        2, static_cast<int>(std::llround(spec.seizures_per_day * spec.hours_per_patient / 24.0)));
    const double min_sep = spec.min_onset_separation_min * 60.0;
    const double lo = start + spec.first_onset_margin_hours * 3600.0;
    const double hi = end - spec.first_onset_margin_hours * 3600.0;
    if (hi <= lo) {
        throw std::runtime_error("synthesize: recording too short for the onset margins");
    }
    std::vector<UnixTime> onsets;
    int attempts = 0;
    const int max_attempts = 400 * target;
    while (static_cast<int>(onsets.size()) < target) {
        if (++attempts > max_attempts) {
            throw std::runtime_error("synthesize: cannot place " + std::to_string(target) +
                                     " onsets with " + std::to_string(spec.min_onset_separation_min) +
                                     " min separation; spec too dense");
        }
        double tod = std::fmod(rng.normal(spec.circadian_peak_hour, spec.circadian_std_hours), 24.0);
        if (tod < 0) tod += 24.0;
        // map the time-of-day onto an absolute time inside the margins
        double day0 = std::floor(start / 86400.0) * 86400.0;
        // whole seconds, so the on-disk ISO-8601 onset round-trips exactly
        for (double t = std::floor(day0 + tod * 3600.0); t < hi; t += 86400.0) {
            if (t < lo) continue;
            bool ok = true;
            for (UnixTime o : onsets) {
                if (std::abs(o - t) < min_sep) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                onsets.push_back(t);
                break;
            }
            // same time-of-day on a later day keeps the circadian shape intact
        }
    }
    std::sort(onsets.begin(), onsets.end());
    return onsets;
}

}  // namespace

EEGRecording synthesize_recording(const SyntheticSpec& spec, int patient_index, std::uint64_t seed) {
    spec.validate();
    EEGRecording rec;
    char pid[16];
    std::snprintf(pid, sizeof(pid), "pat%02d", patient_index + 1);
    rec.patient_id = pid;
    rec.sampling_rate_hz = spec.sampling_rate_hz;
    rec.n_channels = spec.n_channels;
    rec.start_time = parse_iso8601(spec.base_start_time) +
                     static_cast<double>(patient_index) * spec.start_stagger_hours * 3600.0;
    const std::int64_t n = static_cast<std::int64_t>(
        std::llround(spec.hours_per_patient * 3600.0 * spec.sampling_rate_hz));
    rec.samples.assign(static_cast<std::size_t>(n) * spec.n_channels, 0.0f);

    Rng onset_rng = Rng::stream(seed, {static_cast<std::uint64_t>(patient_index), 0});
    rec.seizure_onsets = place_onsets(spec, rec.start_time, rec.start_time + n / spec.sampling_rate_hz,
                                      onset_rng);

    const double fs = spec.sampling_rate_hz;
    const double lead_sec = spec.preictal_lead_min * 60.0;
    Rng sig_rng = Rng::stream(seed, {static_cast<std::uint64_t>(patient_index), 2});

    for (int c = 0; c < spec.n_channels; ++c) {
        Rng ch_rng = Rng::stream(seed, {static_cast<std::uint64_t>(patient_index), 1,
                                        static_cast<std::uint64_t>(c)});
        PinkNoise pink(ch_rng);
        float* out = rec.channel(c);
        for (std::int64_t i = 0; i < n; ++i) out[i] = static_cast<float>(pink.next());
    }

    // Ramping narrowband signature ahead of each onset, all channels.
    for (UnixTime onset : rec.seizure_onsets) {
        const double seg_start = onset - lead_sec;
        const std::int64_t i0 = std::max<std::int64_t>(
            0, static_cast<std::int64_t>(std::ceil((seg_start - rec.start_time) * fs)));
        const std::int64_t i1 = std::min<std::int64_t>(
            n, static_cast<std::int64_t>(std::floor((onset - rec.start_time) * fs)) + 1);
        for (int c = 0; c < spec.n_channels; ++c) {
            double f1 = sig_rng.uniform(spec.band_low_hz, spec.band_high_hz);
            double f2 = sig_rng.uniform(spec.band_low_hz, spec.band_high_hz);
            double p1 = sig_rng.uniform(0.0, 6.283185307179586);
            double p2 = sig_rng.uniform(0.0, 6.283185307179586);
            double gain = sig_rng.uniform(0.6, 1.0);
            float* out = rec.channel(c);
            for (std::int64_t i = i0; i < i1; ++i) {
                double tau = static_cast<double>(i) / fs - (seg_start - rec.start_time);
                double ramp = std::clamp(tau / lead_sec, 0.0, 1.0);
                double amp = spec.separability * gain * ramp;
                out[i] += static_cast<float>(
                    amp * (std::sin(6.283185307179586 * f1 * tau + p1) +
                           0.6 * std::sin(6.283185307179586 * f2 * tau + p2)));
            }
        }
    }
    rec.validate();
    return rec;
}

std::vector<EEGRecording> synthesize_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
    std::vector<EEGRecording> recs;
    recs.reserve(static_cast<std::size_t>(spec.n_patients));
    for (int i = 0; i < spec.n_patients; ++i) {
        recs.push_back(synthesize_recording(spec, i, seed));
    }
    return recs;
}

std::string save_recording(const EEGRecording& rec, const std::string& dir) {
    rec.validate();
    fs::create_directories(dir);
    const std::string raw_name = rec.patient_id + ".f32";
    const fs::path meta_path = fs::path(dir) / (rec.patient_id + ".json");
    const fs::path raw_path = fs::path(dir) / raw_name;

    json onsets = json::array();
    for (UnixTime o : rec.seizure_onsets) onsets.push_back(iso8601_utc(o));
    json channel_names = rec.channel_names;
    if (rec.channel_names.empty()) {
        channel_names = json::array();
        for (int c = 0; c < rec.n_channels; ++c) {
            char name[16];
            std::snprintf(name, sizeof(name), "ch%02d", c + 1);
            channel_names.push_back(name);
        }
    }
    json meta = {{"format_version", 1},
                 {"patient_id", rec.patient_id},
                 {"sampling_rate_hz", rec.sampling_rate_hz},
                 {"n_channels", rec.n_channels},
                 {"n_samples", rec.n_samples()},
                 {"channel_names", channel_names},
                 {"start_time", iso8601_utc(rec.start_time)},
                 {"seizure_onsets", onsets},
                 {"raw_file", raw_name}};

    {
        const std::string tmp = raw_path.string() + ".tmp";
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("save_recording: cannot open " + tmp);
        const std::int64_t ns = rec.n_samples();
        std::vector<char> buf;
        buf.reserve(static_cast<std::size_t>(rec.n_channels) * 4 * 4096);
        for (std::int64_t t = 0; t < ns; ++t) {
            for (int c = 0; c < rec.n_channels; ++c) {
                std::uint32_t u = std::bit_cast<std::uint32_t>(rec.channel(c)[t]);
                for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
            }
            if (buf.size() >= static_cast<std::size_t>(rec.n_channels) * 4 * 4096) {
                os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
                buf.clear();
            }
        }
        if (!buf.empty()) os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!os) throw std::runtime_error("save_recording: write failed for " + tmp);
        os.close();
        fs::rename(tmp, raw_path);
    }
    {
        const std::string tmp = meta_path.string() + ".tmp";
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw std::runtime_error("save_recording: cannot open " + tmp);
        os << meta.dump(2) << "\n";
        os.close();
        fs::rename(tmp, meta_path);
    }
    return meta_path.string();
}

EEGRecording load_recording(const std::string& meta_path) {
    std::ifstream is(meta_path);
    if (!is) throw std::runtime_error("load_recording: cannot open " + meta_path);
    json meta = json::parse(is);
    EEGRecording rec;
    rec.patient_id = meta.at("patient_id").get<std::string>();
    rec.sampling_rate_hz = meta.at("sampling_rate_hz").get<double>();
    rec.n_channels = meta.at("n_channels").get<int>();
    rec.channel_names = meta.value("channel_names", std::vector<std::string>{});
    rec.start_time = parse_iso8601(meta.at("start_time").get<std::string>());
    for (const auto& o : meta.at("seizure_onsets")) {
        rec.seizure_onsets.push_back(parse_iso8601(o.get<std::string>()));
    }
    const std::int64_t ns = meta.at("n_samples").get<std::int64_t>();
    const fs::path raw_path = fs::path(meta_path).parent_path() / meta.at("raw_file").get<std::string>();

    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw std::runtime_error("load_recording: cannot open " + raw_path.string());
    rec.samples.assign(static_cast<std::size_t>(ns) * rec.n_channels, 0.0f);
    std::vector<unsigned char> buf(static_cast<std::size_t>(rec.n_channels) * 4);
    for (std::int64_t t = 0; t < ns; ++t) {
        raw.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!raw) throw std::runtime_error("load_recording: raw file truncated: " + raw_path.string());
        for (int c = 0; c < rec.n_channels; ++c) {
            rec.channel(c)[t] = std::bit_cast<float>(read_u32le(buf.data() + static_cast<std::size_t>(c) * 4));
        }
    }
    rec.validate();
    return rec;
}

std::vector<std::string> list_recordings(const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        std::ifstream is(entry.path());
        json j;
        try {
            j = json::parse(is);
        } catch (const json::exception&) {
            continue;
        }
        if (j.contains("patient_id") && j.contains("raw_file")) out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace riskcast
