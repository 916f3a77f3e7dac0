// Copyright 2026 The Pathforge Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PATHFORGE_TESTS_TEST_UTIL_H_
#define PATHFORGE_TESTS_TEST_UTIL_H_

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "pathforge/error.h"
#include "pathforge/raster.h"
#include "pathforge/rng.h"

namespace pathforge::testing {

class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "pathforge-XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline RasterImage RandomImage(int w, int h, uint64_t seed) {
  Rng rng(seed);
  RasterImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.UniformInt(256));
  return img;
}

/// Smooth diagonal gradient; distinct values along both axes.
inline RasterImage GradientImage(int w, int h) {
  RasterImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint8_t* p = img.at(x, y);
      p[0] = static_cast<uint8_t>(x % 256);
      p[1] = static_cast<uint8_t>(y % 256);
      p[2] = static_cast<uint8_t>((x + y) / 8 % 256);
    }
  }
  return img;
}

inline std::vector<uint8_t> FileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void WriteBytes(const std::filesystem::path& path,
                       const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline void WriteText(const std::filesystem::path& path,
                      const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

}  // namespace pathforge::testing

#define CHECK_ERROR_CODE(expr, expected_code)                                 \
  do {                                                                        \
    bool thrown_ = false;                                                     \
    try {                                                                     \
      (void)(expr);                                                           \
    } catch (const ::pathforge::Error& e_) {                                  \
      thrown_ = true;                                                         \
      CHECK_MESSAGE(e_.code() == (expected_code), e_.what());                 \
    }                                                                         \
    CHECK_MESSAGE(thrown_, "expected " #expected_code " from " #expr);        \
  } while (0)

#endif  // PATHFORGE_TESTS_TEST_UTIL_H_
