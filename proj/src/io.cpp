#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "glutag/audio.hpp"
#include "glutag/error.hpp"
#include "glutag/fmat.hpp"

namespace glutag {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

constexpr std::array<char, 4> kFmatMagic{'F', 'M', 'A', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get_le(const std::vector<char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof v);
  return v;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_fmat(std::ostream& out, const FloatMatrix& m) {
  out.write(kFmatMagic.data(), kFmatMagic.size());
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(float)));
  if (!out) throw Error(ErrorCode::kIo, "FMAT write failed");
}

FloatMatrix read_fmat(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4) throw Error(ErrorCode::kTruncated, "FMAT header");
  if (magic != kFmatMagic) throw Error(ErrorCode::kBadMagic, "not an FMAT stream");
  std::uint32_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (in.gcount() != sizeof dims) throw Error(ErrorCode::kTruncated, "FMAT dimensions");
  FloatMatrix m(dims[0], dims[1]);
  const auto bytes = static_cast<std::streamsize>(m.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(m.data()), bytes);
  if (in.gcount() != bytes) throw Error(ErrorCode::kTruncated, "FMAT payload");
  return m;
}

void write_fmat_file(const std::string& path, const FloatMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  write_fmat(out, m);
}

FloatMatrix read_fmat_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_fmat(in);
}

void write_wav(const std::string& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  const std::uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  std::vector<std::int16_t> pcm(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const double x = std::clamp(wave.samples[i], -1.0, 1.0);
    pcm[i] = static_cast<std::int16_t>(std::lround(x * 32767.0));
  }
  out.write(reinterpret_cast<const char*>(pcm.data()), static_cast<std::streamsize>(data_bytes));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Waveform read_wav(const std::string& path) {
  const std::vector<char> buf = slurp(path);
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorCode::kBadMagic, path + " is not a RIFF/WAVE file");

  Waveform wave;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = get_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > buf.size()) throw Error(ErrorCode::kTruncated, path + " chunk " + id);
    if (id == "fmt ") {
      if (size < 16) throw Error(ErrorCode::kTruncated, path + " fmt chunk");
      const auto format = get_le<std::uint16_t>(buf, body);
      const auto channels = get_le<std::uint16_t>(buf, body + 2);
      const auto bits = get_le<std::uint16_t>(buf, body + 14);
      if (format != 1 || channels != 1 || bits != 16)
        throw Error(ErrorCode::kIo, path + ": only 16-bit PCM mono is supported");
      wave.sample_rate = static_cast<int>(get_le<std::uint32_t>(buf, body + 4));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorCode::kIo, path + ": data chunk before fmt chunk");
      const std::size_t n = size / 2;
      wave.samples.resize(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        wave.samples[static_cast<Eigen::Index>(i)] =
            std::max(-1.0, get_le<std::int16_t>(buf, body + 2 * i) / 32767.0);
      return wave;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorCode::kTruncated, path + ": no data chunk");
}

}  // namespace glutag
