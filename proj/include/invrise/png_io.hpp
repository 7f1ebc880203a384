/*
 * Copyright 2026 The InvRISE Workbench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// PNG encoding and decoding on top of libpng's simplified API.
//
// Files on disk are 8-bit (values v map to round(255 v)). The classifier
// bridge uses 16-bit linear PNGs so masked images survive transport with
// ~1e-5 precision instead of ~2e-3.

#ifndef INVRISE_PNG_IO_HPP_
#define INVRISE_PNG_IO_HPP_

#include <png.h>

#include <boost/beast/core/detail/base64.hpp>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "invrise/common.hpp"
#include "invrise/imaging.hpp"

namespace invrise {

enum class PngDepth { k8 = 8, k16 = 16 };

namespace detail {

struct PngImageGuard {
  png_image* image;
  ~PngImageGuard() { png_image_free(image); }
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image& image, PngDepth depth = PngDepth::k8) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.side());
  png.height = static_cast<png_uint_32>(image.side());
  const bool color = image.channels() == 3;
  const auto px = image.pixels();
  png_alloc_size_t size = 0;
  std::vector<std::uint8_t> out;
  if (depth == PngDepth::k8) {
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> raw(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      raw[i] = static_cast<std::uint8_t>(std::lround(px[i] * 255.0));
    }
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, raw.data(), 0, nullptr)) {
      throw Error(std::string("png encode failed: ") + png.message);
    }
    out.resize(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, raw.data(), 0, nullptr)) {
      throw Error(std::string("png encode failed: ") + png.message);
    }
  } else {
    png.format = color ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_LINEAR_Y;
    std::vector<std::uint16_t> raw(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      raw[i] = static_cast<std::uint16_t>(std::lround(px[i] * 65535.0));
    }
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, raw.data(), 0, nullptr)) {
      throw Error(std::string("png encode failed: ") + png.message);
    }
    out.resize(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, raw.data(), 0, nullptr)) {
      throw Error(std::string("png encode failed: ") + png.message);
    }
  }
  out.resize(size);
  return out;
}

// Decodes 8- or 16-bit grayscale/RGB PNGs (alpha is dropped). Images must be
// square.
inline Image decode_png(const std::uint8_t* data, std::size_t size) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, data, size)) {
    throw LoadError(std::string("png decode failed: ") + png.message);
  }
  detail::PngImageGuard guard{&png};
  if (png.width != png.height) {
    throw LoadError("png is not square (" + std::to_string(png.width) + "x" +
                    std::to_string(png.height) + ")");
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool linear16 = (png.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  const int channels = color ? 3 : 1;
  const int side = static_cast<int>(png.width);
  std::vector<double> pixels(static_cast<std::size_t>(side) * side * channels);
  if (linear16) {
    png.format = color ? PNG_FORMAT_LINEAR_RGB : PNG_FORMAT_LINEAR_Y;
    std::vector<std::uint16_t> raw(pixels.size());
    if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
      throw LoadError(std::string("png decode failed: ") + png.message);
    }
    for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = raw[i] / 65535.0;
  } else {
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> raw(pixels.size());
    if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
      throw LoadError(std::string("png decode failed: ") + png.message);
    }
    for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = raw[i] / 255.0;
  }
  return Image(side, channels, std::move(pixels));
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes) {
  return decode_png(bytes.data(), bytes.size());
}

inline Image load_png(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

inline void save_png(const std::filesystem::path& path, const Image& image) {
  detail::write_file_bytes(path, encode_png(image));
}

// Binary masks are single-channel PNGs holding {0, 255}.
inline std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask) {
  Image image(mask.side(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) image.pixels()[i] = mask[i] ? 1.0 : 0.0;
  return encode_png(image);
}

inline BinaryMask decode_mask_png(const std::vector<std::uint8_t>& bytes) {
  const Image image = convert_channels(decode_png(bytes), 1);
  BinaryMask mask(image.side());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = image.pixels()[i] >= 0.5 ? 1 : 0;
  return mask;
}

inline BinaryMask load_mask_png(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_mask_png(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

inline void save_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  detail::write_file_bytes(path, encode_mask_png(mask));
}

// Standard base64 (RFC 4648) for PNG payloads in JSON.
inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  const std::string_view rest = text.substr(read);
  if (text.size() % 4 != 0 || rest.size() > 2 || rest.find_first_not_of('=') != std::string_view::npos) {
    throw std::invalid_argument("invalid base64 payload");
  }
  out.resize(written);
  return out;
}

}  // namespace invrise

#endif  // INVRISE_PNG_IO_HPP_
