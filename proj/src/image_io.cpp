/* Copyright 2026 The SST Parsing Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "sst/image_io.hpp"

#include <cctype>
#include <fstream>
#include <string>

namespace sst {
namespace {

void write_netpbm(const std::filesystem::path& path, const char* magic, int h, int w,
                  const std::uint8_t* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write " + path.string());
  const std::string header =
      std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw ImageIoError("write failed for " + path.string());
}

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else {
      break;
    }
    c = in.peek();
  }
  int v = -1;
  if (!(in >> v) || v < 0) throw ImageIoError("malformed netpbm header in " + path.string());
  return v;
}

std::vector<std::uint8_t> read_netpbm(const std::filesystem::path& path, const char* magic,
                                      int channels, int& h, int& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  std::string m;
  in >> m;
  if (m != magic) throw ImageIoError(path.string() + ": expected " + magic + ", found " + m);
  w = read_header_int(in, path);
  h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (maxval != 255) throw ImageIoError(path.string() + ": only maxval 255 is supported");
  in.get();
  std::vector<std::uint8_t> data(static_cast<std::size_t>(h) * w * channels);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) {
    throw ImageIoError(path.string() + ": truncated pixel data");
  }
  return data;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& image) {
  write_netpbm(path, "P6", image.height, image.width, image.rgb.data(), image.rgb.size());
}

Image read_ppm(const std::filesystem::path& path) {
  Image img;
  img.rgb = read_netpbm(path, "P6", 3, img.height, img.width);
  return img;
}

void write_pgm(const std::filesystem::path& path, const LabelMap& labels) {
  write_netpbm(path, "P5", labels.height, labels.width, labels.data.data(), labels.data.size());
}

LabelMap read_pgm(const std::filesystem::path& path) {
  LabelMap lm;
  lm.data = read_netpbm(path, "P5", 1, lm.height, lm.width);
  return lm;
}

}  // namespace sst
