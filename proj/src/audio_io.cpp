#include "autotune/audio_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "autotune/common.hpp"

namespace autotune {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

struct Reader {
    std::ifstream in;
    std::string path;

    void read_bytes(void* dst, std::size_t n, const char* what) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            throw CorruptFileError(path + ": truncated " + what);
    }

    std::uint16_t u16(const char* what) {
        unsigned char b[2];
        read_bytes(b, 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        read_bytes(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    void skip(std::uint32_t n, const char* what) {
        in.ignore(n);
        if (static_cast<std::uint32_t>(in.gcount()) != n)
            throw CorruptFileError(path + ": truncated " + what);
        in.clear();
    }
};

float decode_sample(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
    if (format == kFormatPcm && bits == 16) {
        auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        return static_cast<float>(v) / 32768.0f;
    }
    if (format == kFormatPcm && bits == 24) {
        std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
        if (v & 0x800000) v |= ~0xFFFFFF; // sign-extend
        return static_cast<float>(static_cast<double>(v) / 8388608.0);
    }
    // IEEE float-32
    float f;
    std::memcpy(&f, p, 4);
    return f;
}

void append_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

} // namespace

AudioBuffer read_wav(const std::string& path) {
    Reader r{std::ifstream(path, std::ios::binary), path};
    if (!r.in) throw IoError(path + ": cannot open for reading");

    char magic[4];
    r.read_bytes(magic, 4, "RIFF header");
    if (std::memcmp(magic, "RIFF", 4) != 0) throw FormatError(path + ": not a RIFF file");
    r.u32("RIFF size");
    r.read_bytes(magic, 4, "WAVE tag");
    if (std::memcmp(magic, "WAVE", 4) != 0) throw FormatError(path + ": not a WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    bool have_fmt = false;
    std::vector<unsigned char> data;
    bool have_data = false;

    while (r.in.peek() != std::char_traits<char>::eof()) {
        char id[4];
        r.read_bytes(id, 4, "chunk id");
        std::uint32_t size = r.u32("chunk size");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw CorruptFileError(path + ": fmt chunk too small");
            format = r.u16("format code");
            channels = r.u16("channel count");
            sample_rate = r.u32("sample rate");
            r.u32("byte rate");
            r.u16("block align");
            bits = r.u16("bits per sample");
            if (size > 16) r.skip(size - 16, "fmt extension");
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data.resize(size);
            if (size > 0) r.read_bytes(data.data(), size, "data chunk");
            have_data = true;
        } else {
            r.skip(size, "chunk body");
        }
        // RIFF chunks are word-aligned; the final pad byte is sometimes omitted.
        if ((size & 1) && r.in.peek() != std::char_traits<char>::eof()) r.skip(1, "chunk pad");
    }

    if (!have_fmt) throw CorruptFileError(path + ": missing fmt chunk");
    if (!have_data) throw CorruptFileError(path + ": missing data chunk");
    if (sample_rate == 0) throw FormatError(path + ": zero sample rate");
    if (channels != 1 && channels != 2)
        throw FormatError(path + ": unsupported channel count " + std::to_string(channels));

    const bool supported = (format == kFormatPcm && (bits == 16 || bits == 24)) ||
                           (format == kFormatIeeeFloat && bits == 32);
    if (!supported)
        throw FormatError(path + ": unsupported codec (format " + std::to_string(format) +
                          ", " + std::to_string(bits) + "-bit)");

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    if (frame_bytes == 0 || data.size() % frame_bytes != 0)
        throw CorruptFileError(path + ": data chunk not a whole number of frames");
    const std::size_t n_frames = data.size() / frame_bytes;

    AudioBuffer out;
    out.sample_rate = static_cast<int>(sample_rate);
    out.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        const unsigned char* p = data.data() + i * frame_bytes;
        if (channels == 1) {
            out.samples[i] = decode_sample(p, format, bits);
        } else {
            double l = decode_sample(p, format, bits);
            double rch = decode_sample(p + bytes_per_sample, format, bits);
            out.samples[i] = static_cast<float>((l + rch) / 2.0);
        }
    }

    for (float s : out.samples) {
        if (!std::isfinite(s)) throw CorruptFileError(path + ": non-finite sample value");
        if (std::fabs(s) > 1.0f)
            throw FormatError(path + ": sample exceeds full scale (refusing to clip on read)");
    }
    return out;
}

void write_wav(const AudioBuffer& buffer, const std::string& path) {
    if (buffer.sample_rate <= 0) throw InvalidArgument("write_wav: sample_rate must be positive");

    const std::uint32_t n = static_cast<std::uint32_t>(buffer.samples.size());
    const std::uint32_t data_bytes = n * 4;

    std::string out;
    out.reserve(58 + data_bytes);
    out += "RIFF";
    append_u32(out, 4 + 26 + 12 + 8 + data_bytes); // WAVE + fmt(18) + fact + data header
    out += "WAVE";
    out += "fmt ";
    append_u32(out, 18);
    append_u16(out, kFormatIeeeFloat);
    append_u16(out, 1); // mono
    append_u32(out, static_cast<std::uint32_t>(buffer.sample_rate));
    append_u32(out, static_cast<std::uint32_t>(buffer.sample_rate) * 4);
    append_u16(out, 4);  // block align
    append_u16(out, 32); // bits
    append_u16(out, 0);  // extension size
    out += "fact";
    append_u32(out, 4);
    append_u32(out, n);
    out += "data";
    append_u32(out, data_bytes);
    std::size_t payload_at = out.size();
    out.resize(out.size() + data_bytes);
    if (n > 0) std::memcpy(out.data() + payload_at, buffer.samples.data(), data_bytes);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(path + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError(path + ": write failed");
}

} // namespace autotune
