#pragma once

#include <string>
#include <vector>

namespace autotune {

// Mono audio, the unit of all DSP in this project. Samples are full-scale
// normalized (|x| <= 1 after ingestion).
struct AudioBuffer {
    std::vector<float> samples;
    int sample_rate = 0;

    std::size_t size() const { return samples.size(); }
    double duration_sec() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Reads a RIFF/WAVE file. Accepts PCM 16-bit, PCM 24-bit and IEEE float-32,
// mono or stereo; stereo is downmixed by the arithmetic mean of the channels.
// Integer PCM is scaled by 1/2^(bits-1).
AudioBuffer read_wav(const std::string& path);

// Writes a mono IEEE float-32 WAV. read_wav(write_wav(b)) reproduces the
// samples bit-exactly.
void write_wav(const AudioBuffer& buffer, const std::string& path);

} // namespace autotune
