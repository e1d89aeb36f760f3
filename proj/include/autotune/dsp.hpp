#pragma once

#include <complex>
#include <string>
#include <vector>

#include "autotune/audio_io.hpp"

namespace autotune {

// Periodic Hann window: w[k] = 0.5 * (1 - cos(2*pi*k/n)). Sum of the
// coefficients is exactly n/2.
std::vector<double> hann_window(int n);

// Band-limited (windowed-sinc) sample rate conversion. Output length is
// round(input_length * target_rate / input_rate).
AudioBuffer resample(const AudioBuffer& in, int target_rate);

// Internal rational-free resampler; ratio = output_rate / input_rate.
std::vector<float> resample_by_ratio(const std::vector<float>& in, double ratio);

// Pitch shift by |cents| <= 500: phase-vocoder time stretch by
// 2^(cents/1200) followed by resampling back to the original duration.
// Output has exactly the input's length.
AudioBuffer pitch_shift(const AudioBuffer& in, double cents);

struct CqtParams {
    double fmin = 75.0;
    int bins_per_octave = 48;
    int n_bins = 276;
    int hop = 1024;
    int sample_rate = 44100;

    double bin_frequency(int k) const;
    // Q = 1 / (2^(1/bins_per_octave) - 1)
    double q_factor() const;
    // min(ceil(Q * sr / f_k), 8 * hop)
    int kernel_length(int k) const;
    int max_kernel_length() const { return 8 * hop; }
    void validate() const;
};

// Frames x bins matrix of non-negative CQT magnitudes (values in [0,1] once
// log-compressed). Row-major storage.
struct FeatureMatrix {
    int n_frames = 0;
    int n_bins = 0;
    int hop = 0;
    int sample_rate = 0;
    std::vector<float> values;

    static FeatureMatrix zeros(int frames, int bins, int hop = 0, int sample_rate = 0);
    float at(int frame, int bin) const { return values[static_cast<std::size_t>(frame) * n_bins + bin]; }
    float& at(int frame, int bin) { return values[static_cast<std::size_t>(frame) * n_bins + bin]; }
    const float* row(int frame) const { return values.data() + static_cast<std::size_t>(frame) * n_bins; }
    float* row(int frame) { return values.data() + static_cast<std::size_t>(frame) * n_bins; }
    float max_value() const;
};

// Constant-Q analysis with precomputed spectral kernels (one FFT per frame,
// sparse frequency-domain inner products). Exact up to the kernel sparsity
// threshold; see cqt_magnitudes_direct for the definition-level evaluator.
class CqtTransform {
public:
    explicit CqtTransform(const CqtParams& params);

    // Raw (uncompressed) magnitudes. Frame m is centered at sample m*hop;
    // frame count is ceil(len/hop).
    FeatureMatrix magnitudes(const AudioBuffer& audio) const;

    const CqtParams& params() const { return params_; }

private:
    struct BinKernel {
        int first_index = 0;                      // FFT bin of the first coefficient
        std::vector<std::complex<double>> coeff;  // conj(K)/N, scaled to unit tone response
    };
    CqtParams params_;
    int fft_size_ = 0;
    std::vector<BinKernel> kernels_;
};

// One-shot convenience wrappers.
FeatureMatrix cqt_magnitudes(const AudioBuffer& audio, const CqtParams& params);

// Definition-level evaluation (time-domain inner products). Slow; used as
// the verification oracle for CqtTransform.
FeatureMatrix cqt_magnitudes_direct(const AudioBuffer& audio, const CqtParams& params);

// In-place log compression to [0,1]: v = clamp(1 + 20*log10(mag/max_ref)/80, 0, 1).
// max_ref <= 0 (e.g. digital silence) maps everything to the floor.
void log_compress(FeatureMatrix& m, double max_ref);

// Magnitudes + self-referenced compression (max_ref = the matrix's own max).
FeatureMatrix cqt(const AudioBuffer& audio, const CqtParams& params);

// Per-frame concatenation: accompaniment block first, then vocal block.
FeatureMatrix stack_features(const FeatureMatrix& vocal_cqt, const FeatureMatrix& accomp_cqt);

// Feature cache, magic "AUTF": version u16, n_frames u32, n_bins u32,
// hop u32, sample_rate u32, then row-major float-32, all little-endian.
void save_features(const FeatureMatrix& m, const std::string& path);
FeatureMatrix load_features(const std::string& path);

} // namespace autotune
