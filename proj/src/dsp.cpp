#include "autotune/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "autotune/common.hpp"

namespace autotune {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Phase vocoder analysis/synthesis geometry.
constexpr int kPvFrame = 2048;
constexpr int kPvHop = 512;

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

double sinc(double x) {
    if (std::fabs(x) < 1e-12) return 1.0;
    return std::sin(kPi * x) / (kPi * x);
}

// Reflect padding (librosa-style, no edge repeat); degenerates to edge clamp
// for signals too short to reflect.
double padded_sample(const std::vector<float>& x, long long i) {
    const long long n = static_cast<long long>(x.size());
    if (n == 0) return 0.0;
    if (n == 1) return x[0];
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return x[static_cast<std::size_t>(i)];
}

struct Stft {
    int n_fft = 0;
    int hop = 0;
    std::size_t n_frames = 0;
    // magnitude/phase per frame, bins 0..n_fft/2
    std::vector<std::vector<double>> mag;
    std::vector<std::vector<double>> phase;
};

Stft stft_analyze(const std::vector<float>& x, int n_fft, int hop) {
    Stft s;
    s.n_fft = n_fft;
    s.hop = hop;
    s.n_frames = x.size() / static_cast<std::size_t>(hop) + 1;

    const std::vector<double> win = hann_window(n_fft);
    const int half = n_fft / 2;
    const int n_bins = half + 1;

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

    std::vector<double> frame(n_fft);
    std::vector<std::complex<double>> spec;
    s.mag.assign(s.n_frames, std::vector<double>(n_bins));
    s.phase.assign(s.n_frames, std::vector<double>(n_bins));
    for (std::size_t m = 0; m < s.n_frames; ++m) {
        const long long center = static_cast<long long>(m) * hop;
        for (int i = 0; i < n_fft; ++i)
            frame[i] = win[i] * padded_sample(x, center - half + i);
        fft.fwd(spec, frame);
        for (int k = 0; k < n_bins; ++k) {
            s.mag[m][k] = std::abs(spec[k]);
            s.phase[m][k] = std::arg(spec[k]);
        }
    }
    return s;
}

// Overlap-add synthesis from magnitude+phase frames; frame m is centered at
// m*hop. Returns exactly target_len samples.
std::vector<float> istft_synthesize(const std::vector<std::vector<double>>& mag,
                                    const std::vector<std::vector<double>>& phase,
                                    int n_fft, int hop, std::size_t target_len) {
    const std::vector<double> win = hann_window(n_fft);
    const int half = n_fft / 2;
    const int n_bins = half + 1;
    const std::size_t n_frames = mag.size();

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

    const std::size_t padded_len = (n_frames > 0 ? (n_frames - 1) * hop : 0) + n_fft;
    std::vector<double> acc(padded_len, 0.0), wsq(padded_len, 0.0);

    std::vector<std::complex<double>> spec(n_bins);
    std::vector<double> frame;
    for (std::size_t m = 0; m < n_frames; ++m) {
        for (int k = 0; k < n_bins; ++k) spec[k] = std::polar(mag[m][k], phase[m][k]);
        fft.inv(frame, spec, n_fft);
        const std::size_t off = m * hop;
        for (int i = 0; i < n_fft; ++i) {
            acc[off + i] += win[i] * frame[i];
            wsq[off + i] += win[i] * win[i];
        }
    }

    std::vector<float> out(target_len, 0.0f);
    for (std::size_t i = 0; i < target_len; ++i) {
        const std::size_t j = i + half; // frames are centered: drop the left half-window
        if (j < padded_len && wsq[j] > 1e-9)
            out[i] = static_cast<float>(acc[j] / wsq[j]);
    }
    return out;
}

// Time stretch by `stretch` (output duration = stretch * input duration),
// pitch preserved. Fixed synthesis hop, fractional analysis stepping with
// accumulated instantaneous phase.
std::vector<float> phase_vocoder_stretch(const std::vector<float>& x, double stretch) {
    if (x.empty()) return {};
    const double rate = 1.0 / stretch; // analysis step per synthesis frame
    const Stft s = stft_analyze(x, kPvFrame, kPvHop);
    const int n_bins = kPvFrame / 2 + 1;

    std::vector<double> phi_advance(n_bins);
    for (int k = 0; k < n_bins; ++k) phi_advance[k] = kTwoPi * k * kPvHop / kPvFrame;

    const std::size_t n_out =
        static_cast<std::size_t>(std::ceil(static_cast<double>(s.n_frames) / rate));
    std::vector<std::vector<double>> mag(n_out, std::vector<double>(n_bins));
    std::vector<std::vector<double>> phase(n_out, std::vector<double>(n_bins));

    std::vector<double> phase_acc = s.phase[0];
    for (std::size_t i = 0; i < n_out; ++i) {
        double t = static_cast<double>(i) * rate;
        if (t > static_cast<double>(s.n_frames - 1)) t = static_cast<double>(s.n_frames - 1);
        const std::size_t i0 = static_cast<std::size_t>(t);
        const std::size_t i1 = std::min(i0 + 1, s.n_frames - 1);
        const double frac = t - static_cast<double>(i0);
        for (int k = 0; k < n_bins; ++k) {
            mag[i][k] = (1.0 - frac) * s.mag[i0][k] + frac * s.mag[i1][k];
            phase[i][k] = phase_acc[k];
        }
        for (int k = 0; k < n_bins; ++k) {
            double dphi = s.phase[i1][k] - s.phase[i0][k] - phi_advance[k];
            dphi -= kTwoPi * std::round(dphi / kTwoPi);
            phase_acc[k] += phi_advance[k] + dphi;
        }
    }

    const auto target_len =
        static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * stretch));
    return istft_synthesize(mag, phase, kPvFrame, kPvHop, target_len);
}

void append_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

} // namespace

std::vector<double> hann_window(int n) {
    if (n < 2) throw InvalidArgument("hann_window: n must be >= 2");
    std::vector<double> w(n);
    for (int k = 0; k < n; ++k) w[k] = 0.5 * (1.0 - std::cos(kTwoPi * k / n));
    return w;
}

std::vector<float> resample_by_ratio(const std::vector<float>& in, double ratio) {
    if (!(ratio > 0.0)) throw InvalidArgument("resample: ratio must be positive");
    const auto n_out = static_cast<std::size_t>(
        std::llround(static_cast<double>(in.size()) * ratio));
    std::vector<float> out(n_out);
    if (n_out == 0 || in.empty()) return out;

    const double cutoff = std::min(1.0, ratio); // in units of input Nyquist
    const int zero_crossings = 32;
    const double side = zero_crossings / cutoff;
    const long long n_in = static_cast<long long>(in.size());

    for (std::size_t m = 0; m < n_out; ++m) {
        const double c = static_cast<double>(m) / ratio;
        const long long j0 = static_cast<long long>(std::ceil(c - side));
        const long long j1 = static_cast<long long>(std::floor(c + side));
        double acc = 0.0, norm = 0.0;
        for (long long j = j0; j <= j1; ++j) {
            const double t = static_cast<double>(j) - c;
            const double w = 0.5 * (1.0 + std::cos(kPi * t / side));
            const double k = cutoff * sinc(cutoff * t) * w;
            norm += k;
            if (j >= 0 && j < n_in) acc += k * in[static_cast<std::size_t>(j)];
        }
        out[m] = static_cast<float>(norm != 0.0 ? acc / norm : 0.0);
    }
    return out;
}

AudioBuffer resample(const AudioBuffer& in, int target_rate) {
    if (target_rate <= 0) throw InvalidArgument("resample: target_rate must be positive");
    if (in.sample_rate <= 0) throw InvalidArgument("resample: input sample_rate must be positive");
    if (target_rate == in.sample_rate) return in;
    AudioBuffer out;
    out.sample_rate = target_rate;
    out.samples = resample_by_ratio(in.samples,
                                    static_cast<double>(target_rate) / in.sample_rate);
    return out;
}

AudioBuffer pitch_shift(const AudioBuffer& in, double cents) {
    if (std::fabs(cents) > 500.0)
        throw InvalidArgument("pitch_shift: |cents| must be <= 500");
    AudioBuffer out;
    out.sample_rate = in.sample_rate;
    if (in.samples.empty()) return out;

    const double ratio = std::exp2(cents / 1200.0);
    // Stretch duration by `ratio`, then play back faster by the same factor:
    // frequencies scale by `ratio`, duration returns to the original.
    std::vector<float> stretched = phase_vocoder_stretch(in.samples, ratio);
    out.samples = resample_by_ratio(stretched, 1.0 / ratio);
    out.samples.resize(in.samples.size(), 0.0f);
    return out;
}

double CqtParams::bin_frequency(int k) const {
    return fmin * std::exp2(static_cast<double>(k) / bins_per_octave);
}

double CqtParams::q_factor() const {
    return 1.0 / (std::exp2(1.0 / bins_per_octave) - 1.0);
}

int CqtParams::kernel_length(int k) const {
    const double ideal = std::ceil(q_factor() * sample_rate / bin_frequency(k));
    return std::max(2, static_cast<int>(std::min(ideal, static_cast<double>(max_kernel_length()))));
}

void CqtParams::validate() const {
    if (fmin <= 0.0) throw InvalidArgument("CqtParams: fmin must be positive");
    if (bins_per_octave <= 0) throw InvalidArgument("CqtParams: bins_per_octave must be positive");
    if (n_bins <= 0) throw InvalidArgument("CqtParams: n_bins must be positive");
    if (hop <= 0) throw InvalidArgument("CqtParams: hop must be positive");
    if (sample_rate <= 0) throw InvalidArgument("CqtParams: sample_rate must be positive");
    if (bin_frequency(n_bins - 1) >= sample_rate / 2.0)
        throw InvalidArgument("CqtParams: top bin frequency reaches Nyquist");
}

FeatureMatrix FeatureMatrix::zeros(int frames, int bins, int hop, int sample_rate) {
    FeatureMatrix m;
    m.n_frames = frames;
    m.n_bins = bins;
    m.hop = hop;
    m.sample_rate = sample_rate;
    m.values.assign(static_cast<std::size_t>(frames) * bins, 0.0f);
    return m;
}

float FeatureMatrix::max_value() const {
    float mx = 0.0f;
    for (float v : values) mx = std::max(mx, v);
    return mx;
}

CqtTransform::CqtTransform(const CqtParams& params) : params_(params) {
    params_.validate();
    fft_size_ = next_pow2(params_.max_kernel_length());
    const int n = fft_size_;

    Eigen::FFT<double> fft;
    kernels_.resize(params_.n_bins);
    std::vector<std::complex<double>> kernel(n), spectrum;
    for (int k = 0; k < params_.n_bins; ++k) {
        const double f = params_.bin_frequency(k);
        const int nk = params_.kernel_length(k);
        const int offset = (n - nk) / 2;
        const std::vector<double> w = hann_window(nk);
        double wsum = 0.0;
        std::fill(kernel.begin(), kernel.end(), std::complex<double>(0.0, 0.0));
        const double omega = kTwoPi * f / params_.sample_rate;
        for (int i = 0; i < nk; ++i) {
            kernel[offset + i] = std::polar(w[i], omega * i);
            wsum += w[i];
        }
        fft.fwd(spectrum, kernel);

        double peak = 0.0;
        for (const auto& c : spectrum) peak = std::max(peak, std::abs(c));
        const double threshold = 1e-5 * peak;

        // The kernel spectrum is concentrated around its center frequency;
        // find the contiguous band above threshold in center-relative
        // (wrap-aware) index space.
        const int center = static_cast<int>(std::lround(f * n / params_.sample_rate));
        int lo = 0, hi = 0;
        for (int d = -n / 2; d < n / 2; ++d) {
            const int idx = ((center + d) % n + n) % n;
            if (std::abs(spectrum[idx]) >= threshold) {
                lo = std::min(lo, d);
                hi = std::max(hi, d);
            }
        }
        const double scale = 2.0 / (wsum * n);
        BinKernel bk;
        bk.first_index = ((center + lo) % n + n) % n;
        bk.coeff.reserve(static_cast<std::size_t>(hi - lo + 1));
        for (int d = lo; d <= hi; ++d) {
            const int idx = ((center + d) % n + n) % n;
            bk.coeff.push_back(std::conj(spectrum[idx]) * scale);
        }
        kernels_[k] = std::move(bk);
    }
}

FeatureMatrix CqtTransform::magnitudes(const AudioBuffer& audio) const {
    if (audio.sample_rate != params_.sample_rate)
        throw InvalidArgument("cqt: audio sample rate does not match params");
    const int n = fft_size_;
    const int hop = params_.hop;
    const long long len = static_cast<long long>(audio.samples.size());
    const int n_frames = static_cast<int>((len + hop - 1) / hop);

    FeatureMatrix out = FeatureMatrix::zeros(n_frames, params_.n_bins, hop, params_.sample_rate);

    std::size_t max_run = 0;
    for (const auto& bk : kernels_) max_run = std::max(max_run, bk.coeff.size());

    Eigen::FFT<double> fft;
    std::vector<double> segment(n);
    std::vector<std::complex<double>> spectrum;
    std::vector<std::complex<double>> ext(static_cast<std::size_t>(n) + max_run);

    for (int m = 0; m < n_frames; ++m) {
        const long long center = static_cast<long long>(m) * hop;
        const long long start = center - n / 2;
        for (int i = 0; i < n; ++i) {
            const long long src = start + i;
            segment[i] = (src >= 0 && src < len)
                             ? static_cast<double>(audio.samples[static_cast<std::size_t>(src)])
                             : 0.0;
        }
        fft.fwd(spectrum, segment);
        // duplicate the wrap region so kernel runs never need a modulo
        std::copy(spectrum.begin(), spectrum.end(), ext.begin());
        std::copy(spectrum.begin(),
                  spectrum.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(max_run, spectrum.size())),
                  ext.begin() + n);

        float* row = out.row(m);
        for (int k = 0; k < params_.n_bins; ++k) {
            const BinKernel& bk = kernels_[k];
            std::complex<double> acc(0.0, 0.0);
            const std::complex<double>* xs = ext.data() + bk.first_index;
            for (std::size_t i = 0; i < bk.coeff.size(); ++i) acc += bk.coeff[i] * xs[i];
            row[k] = static_cast<float>(std::abs(acc));
        }
    }
    return out;
}

FeatureMatrix cqt_magnitudes(const AudioBuffer& audio, const CqtParams& params) {
    return CqtTransform(params).magnitudes(audio);
}

FeatureMatrix cqt_magnitudes_direct(const AudioBuffer& audio, const CqtParams& params) {
    params.validate();
    if (audio.sample_rate != params.sample_rate)
        throw InvalidArgument("cqt: audio sample rate does not match params");
    const int n = next_pow2(params.max_kernel_length());
    const int hop = params.hop;
    const long long len = static_cast<long long>(audio.samples.size());
    const int n_frames = static_cast<int>((len + hop - 1) / hop);

    FeatureMatrix out = FeatureMatrix::zeros(n_frames, params.n_bins, hop, params.sample_rate);
    for (int k = 0; k < params.n_bins; ++k) {
        const double f = params.bin_frequency(k);
        const int nk = params.kernel_length(k);
        const int offset = (n - nk) / 2;
        const std::vector<double> w = hann_window(nk);
        double wsum = 0.0;
        for (double v : w) wsum += v;
        const double omega = kTwoPi * f / params.sample_rate;
        for (int m = 0; m < n_frames; ++m) {
            const long long start = static_cast<long long>(m) * hop - n / 2 + offset;
            double re = 0.0, im = 0.0;
            for (int i = 0; i < nk; ++i) {
                const long long src = start + i;
                if (src < 0 || src >= len) continue;
                const double x = audio.samples[static_cast<std::size_t>(src)];
                re += x * w[i] * std::cos(omega * i);
                im -= x * w[i] * std::sin(omega * i);
            }
            out.at(m, k) = static_cast<float>(2.0 / wsum * std::hypot(re, im));
        }
    }
    return out;
}

void log_compress(FeatureMatrix& m, double max_ref) {
    for (float& v : m.values) {
        if (v <= 0.0f || max_ref <= 0.0) {
            v = 0.0f;
            continue;
        }
        const double db = 20.0 * std::log10(static_cast<double>(v) / max_ref);
        v = static_cast<float>(std::clamp(1.0 + db / 80.0, 0.0, 1.0));
    }
}

FeatureMatrix cqt(const AudioBuffer& audio, const CqtParams& params) {
    FeatureMatrix m = cqt_magnitudes(audio, params);
    log_compress(m, m.max_value());
    return m;
}

FeatureMatrix stack_features(const FeatureMatrix& vocal_cqt, const FeatureMatrix& accomp_cqt) {
    if (vocal_cqt.n_frames != accomp_cqt.n_frames)
        throw AlignmentError("stack_features: frame counts differ (" +
                             std::to_string(vocal_cqt.n_frames) + " vs " +
                             std::to_string(accomp_cqt.n_frames) + ")");
    FeatureMatrix out = FeatureMatrix::zeros(vocal_cqt.n_frames,
                                             accomp_cqt.n_bins + vocal_cqt.n_bins,
                                             vocal_cqt.hop, vocal_cqt.sample_rate);
    for (int m = 0; m < out.n_frames; ++m) {
        float* row = out.row(m);
        std::memcpy(row, accomp_cqt.row(m), sizeof(float) * accomp_cqt.n_bins);
        std::memcpy(row + accomp_cqt.n_bins, vocal_cqt.row(m), sizeof(float) * vocal_cqt.n_bins);
    }
    return out;
}

void save_features(const FeatureMatrix& m, const std::string& path) {
    std::string out;
    out.reserve(18 + m.values.size() * 4);
    out += "AUTF";
    append_u16(out, 1);
    append_u32(out, static_cast<std::uint32_t>(m.n_frames));
    append_u32(out, static_cast<std::uint32_t>(m.n_bins));
    append_u32(out, static_cast<std::uint32_t>(m.hop));
    append_u32(out, static_cast<std::uint32_t>(m.sample_rate));
    const std::size_t payload_at = out.size();
    out.resize(out.size() + m.values.size() * 4);
    if (!m.values.empty())
        std::memcpy(out.data() + payload_at, m.values.data(), m.values.size() * 4);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(path + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError(path + ": write failed");
}

FeatureMatrix load_features(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(path + ": cannot open for reading");
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, "AUTF", 4) != 0)
        throw FormatError(path + ": not a feature cache (bad magic)");
    unsigned char hdr[18];
    f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    if (f.gcount() != sizeof(hdr)) throw CorruptFileError(path + ": truncated header");
    const std::uint16_t version = static_cast<std::uint16_t>(hdr[0] | (hdr[1] << 8));
    if (version != 1)
        throw FormatError(path + ": unsupported feature cache version " + std::to_string(version));
    auto rd_u32 = [&hdr](int off) {
        return static_cast<std::uint32_t>(hdr[off]) | (static_cast<std::uint32_t>(hdr[off + 1]) << 8) |
               (static_cast<std::uint32_t>(hdr[off + 2]) << 16) |
               (static_cast<std::uint32_t>(hdr[off + 3]) << 24);
    };
    FeatureMatrix m = FeatureMatrix::zeros(static_cast<int>(rd_u32(2)), static_cast<int>(rd_u32(6)),
                                           static_cast<int>(rd_u32(10)), static_cast<int>(rd_u32(14)));
    f.read(reinterpret_cast<char*>(m.values.data()),
           static_cast<std::streamsize>(m.values.size() * 4));
    if (static_cast<std::size_t>(f.gcount()) != m.values.size() * 4)
        throw CorruptFileError(path + ": truncated feature data");
    return m;
}

} // namespace autotune
