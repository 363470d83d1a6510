// SPDX-License-Identifier: Apache-2.0
#include "maskfill/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace maskfill {
namespace {

class PnmParser {
public:
  PnmParser(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::string magic() {
    if (bytes_.size() < 2)
      throw TruncatedFileError(path_ + ": file too short for an image header");
    if (bytes_[0] != 'P' || ((bytes_[1] < '1' || bytes_[1] > '7') && bytes_[1] != 'F' && bytes_[1] != 'f'))
      throw UnsupportedFormatError(path_ + ": unsupported image codec (expected PGM/PPM/PFM)");
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  unsigned long header_number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size())
      throw TruncatedFileError(path_ + ": header truncated");
    if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
      throw UnsupportedFormatError(path_ + ": malformed header at byte " + std::to_string(pos_));
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<unsigned long>(bytes_[pos_] - '0');
      if (v > 0xffffffUL)
        throw UnsupportedFormatError(path_ + ": header value out of range");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from binary samples.
  void end_of_header() {
    if (pos_ >= bytes_.size())
      throw TruncatedFileError(path_ + ": no pixel data");
    if (!std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw UnsupportedFormatError(path_ + ": missing separator after header");
    ++pos_;
  }

  double header_real() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      ++pos_;
    if (start == pos_)
      throw TruncatedFileError(path_ + ": header truncated");
    double v = 0.0;
    const auto [end, ec] = std::from_chars(bytes_.data() + start, bytes_.data() + pos_, v);
    if (ec != std::errc() || end != bytes_.data() + pos_)
      throw UnsupportedFormatError(path_ + ": malformed header at byte " + std::to_string(start));
    return v;
  }

  float float_sample(bool little_endian) {
    if (bytes_.size() - pos_ < 4)
      throw TruncatedFileError(path_ + ": pixel data truncated");
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) {
      const auto b = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + k]));
      bits |= little_endian ? b << (8 * k) : b << (8 * (3 - k));
    }
    pos_ += 4;
    return std::bit_cast<float>(bits);
  }

  unsigned binary_sample(bool wide) {
    const std::size_t n = wide ? 2 : 1;
    if (bytes_.size() - pos_ < n)
      throw TruncatedFileError(path_ + ": pixel data truncated");
    unsigned v = static_cast<unsigned char>(bytes_[pos_]);
    if (wide)
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + 1]);
    pos_ += n;
    return v;
  }

  unsigned ascii_sample() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size())
      throw TruncatedFileError(path_ + ": pixel data truncated");
    return static_cast<unsigned>(header_number());
  }

private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
          ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

// Float map: rows stored bottom to top; a negative scale means little-endian.
ImageBuffer load_pfm(PnmParser &parser, std::size_t channels, const std::filesystem::path &path) {
  const auto width = parser.header_number();
  const auto height = parser.header_number();
  const double scale = parser.header_real();
  if (width == 0 || height == 0)
    throw UnsupportedFormatError(path.string() + ": zero image extent");
  if (scale == 0.0 || !std::isfinite(scale))
    throw UnsupportedFormatError(path.string() + ": bad float-map scale");
  parser.end_of_header();
  ImageBuffer buffer{make_image(channels, height, width), 32};
  const std::size_t plane = height * width;
  for (std::size_t row = height; row-- > 0;)
    for (std::size_t col = 0; col < width; ++col)
      for (std::size_t c = 0; c < channels; ++c)
        buffer.pixels[c * plane + row * width + col] = parser.float_sample(scale < 0.0);
  return buffer;
}

std::string encode_pfm(const Image &img) {
  const std::size_t channels = img.dim(1), height = img.dim(2), width = img.dim(3);
  std::string out = (channels == 1 ? "Pf\n" : "PF\n") + std::to_string(width) + " " +
                    std::to_string(height) + "\n-1.0\n";
  const std::size_t plane = height * width;
  out.reserve(out.size() + 4 * plane * channels);
  for (std::size_t row = height; row-- > 0;)
    for (std::size_t col = 0; col < width; ++col)
      for (std::size_t c = 0; c < channels; ++c) {
        const auto bits = std::bit_cast<std::uint32_t>(img[c * plane + row * width + col]);
        for (int k = 0; k < 4; ++k)
          out.push_back(static_cast<char>((bits >> (8 * k)) & 0xffu));
      }
  return out;
}

std::string encode_pnm(const Image &img, int bit_depth) {
  const std::size_t channels = img.dim(1), height = img.dim(2), width = img.dim(3);
  const unsigned maxval = bit_depth == 8 ? 255u : 65535u;
  std::string out = (channels == 1 ? "P5\n" : "P6\n") + std::to_string(width) + " " +
                    std::to_string(height) + "\n" + std::to_string(maxval) + "\n";
  const std::size_t plane = height * width;
  out.reserve(out.size() + plane * channels * (bit_depth / 8));
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = std::clamp(static_cast<double>(img[c * plane + i]), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::floor(v * maxval + 0.5));
      if (bit_depth == 16)
        out.push_back(static_cast<char>(q >> 8));
      out.push_back(static_cast<char>(q & 0xffu));
    }
  }
  return out;
}

bool has_extension(const std::filesystem::path &path, const char *ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ext;
}

} // namespace

ImageBuffer load_image(const std::filesystem::path &path) {
  std::ifstream file(path, std::ios::binary);
  if (!file)
    throw IoError(path.string() + ": cannot open image");
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  PnmParser parser(std::move(bytes), path.string());

  const std::string magic = parser.magic();
  if (magic == "PF" || magic == "Pf")
    return load_pfm(parser, magic == "PF" ? 3 : 1, path);
  std::size_t channels = 0;
  bool ascii = false;
  if (magic == "P5" || magic == "P2")
    channels = 1;
  else if (magic == "P6" || magic == "P3")
    channels = 3;
  else
    throw UnsupportedFormatError(path.string() + ": unsupported PNM variant " + magic);
  ascii = magic == "P2" || magic == "P3";

  const auto width = parser.header_number();
  const auto height = parser.header_number();
  const auto maxval = parser.header_number();
  if (width == 0 || height == 0)
    throw UnsupportedFormatError(path.string() + ": zero image extent");
  if (maxval == 0 || maxval > 65535)
    throw UnsupportedFormatError(path.string() + ": maxval " + std::to_string(maxval) +
                                 " outside [1,65535]");
  if (!ascii)
    parser.end_of_header();

  const bool wide = maxval > 255;
  ImageBuffer buffer{make_image(channels, height, width), wide ? 16 : 8};
  const float scale = 1.0f / static_cast<float>(maxval);
  const std::size_t plane = height * width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned v = ascii ? parser.ascii_sample() : parser.binary_sample(wide);
      if (v > maxval)
        throw UnsupportedFormatError(path.string() + ": sample exceeds maxval");
      buffer.pixels[c * plane + i] = static_cast<float>(v) * scale;
    }
  }
  return buffer;
}

void save_image(const Image &img, const std::filesystem::path &path, int bit_depth) {
  expect_image_shape(img, "save_image");
  expects(img.dim(0) == 1, "save_image: expected a single image, got batch " +
                               std::to_string(img.dim(0)));
  expects(img.dim(1) == 1 || img.dim(1) == 3, "save_image: channel count must be 1 or 3");
  expects(bit_depth == 8 || bit_depth == 16, "save_image: bit depth must be 8 or 16");
  const std::string out = has_extension(path, ".pfm") ? encode_pfm(img) : encode_pnm(img, bit_depth);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file)
    throw IoError(path.string() + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file)
    throw IoError(path.string() + ": write failed");
}

Image match_channels(const Image &img, std::size_t channels) {
  expect_image_shape(img, "match_channels");
  const std::size_t have = img.dim(1);
  if (have == channels)
    return img;
  const std::size_t batch = img.dim(0), plane = img.dim(2) * img.dim(3);
  Image out({batch, channels, img.dim(2), img.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    const float *src = img.data() + n * have * plane;
    float *dst = out.data() + n * channels * plane;
    if (have == 1) {
      for (std::size_t c = 0; c < channels; ++c)
        std::copy_n(src, plane, dst + c * plane);
    } else if (channels == 1) {
      for (std::size_t i = 0; i < plane; ++i) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < have; ++c)
          acc += src[c * plane + i];
        dst[i] = acc / static_cast<float>(have);
      }
    } else {
      throw ContractViolation("match_channels: cannot map " + std::to_string(have) + " to " +
                              std::to_string(channels) + " channels");
    }
  }
  return out;
}

bool is_image_path(const std::filesystem::path &path) {
  return has_extension(path, ".ppm") || has_extension(path, ".pgm") ||
         has_extension(path, ".pnm") || has_extension(path, ".pfm");
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::directory_iterator it(dir, ec);
  if (ec)
    throw IoError(dir.string() + ": cannot list directory (" + ec.message() + ")");
  std::vector<std::filesystem::path> paths;
  for (const auto &entry : it)
    if (entry.is_regular_file() && is_image_path(entry.path()))
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end(),
            [](const auto &a, const auto &b) { return a.filename() < b.filename(); });
  return paths;
}

} // namespace maskfill
