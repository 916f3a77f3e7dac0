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

// Little-endian encoding helpers shared by the SPYR, PGRD and FSTR formats
// and the ENC1 wire protocol.

#ifndef PATHFORGE_SRC_BINARY_IO_H_
#define PATHFORGE_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "pathforge/error.h"

namespace pathforge::internal {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void Bytes(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
  }
  void Magic(std::string_view magic) { Bytes(magic.data(), magic.size()); }
  void U32(uint32_t v) { Bytes(&v, sizeof(v)); }
  void U64(uint64_t v) { Bytes(&v, sizeof(v)); }
  void I64(int64_t v) { Bytes(&v, sizeof(v)); }
  void F32(float v) { Bytes(&v, sizeof(v)); }
  /// u32 length prefix followed by the bytes.
  void LengthPrefixed(std::string_view s) {
    U32(static_cast<uint32_t>(s.size()));
    Bytes(s.data(), s.size());
  }

  std::vector<uint8_t>& buffer() { return buffer_; }
  size_t size() const { return buffer_.size(); }

 private:
  std::vector<uint8_t> buffer_;
};

/// Cursor over an in-memory buffer. Reads past the end throw `overrun`.
class ByteReader {
 public:
  ByteReader(const uint8_t* data, size_t size, ErrorCode overrun)
      : data_(data), size_(size), overrun_(overrun) {}

  size_t remaining() const { return size_ - pos_; }
  size_t position() const { return pos_; }

  void Bytes(void* out, size_t n) {
    if (n > remaining()) Fail(overrun_, "unexpected end of data");
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  bool Magic(std::string_view magic) {
    if (remaining() < magic.size()) return false;
    const bool ok = std::memcmp(data_ + pos_, magic.data(), magic.size()) == 0;
    pos_ += magic.size();
    return ok;
  }
  uint32_t U32() { uint32_t v; Bytes(&v, sizeof(v)); return v; }
  uint64_t U64() { uint64_t v; Bytes(&v, sizeof(v)); return v; }
  int64_t I64() { int64_t v; Bytes(&v, sizeof(v)); return v; }
  float F32() { float v; Bytes(&v, sizeof(v)); return v; }
  std::string String(size_t n) {
    if (n > remaining()) Fail(overrun_, "unexpected end of data");
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  ErrorCode overrun_;
};

inline std::vector<uint8_t> ReadWholeFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kMissingFile, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<size_t>(in.tellg());
  in.seekg(0);
  std::vector<uint8_t> data(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(data.data()),
                           static_cast<std::streamsize>(size))) {
    Fail(ErrorCode::kIoFailure, "short read on " + path.string());
  }
  return data;
}

/// Writes to a sibling temp file and renames it into place, so readers never
/// observe a partially written file.
inline void AtomicWrite(const std::filesystem::path& path,
                        const std::vector<uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorCode::kIoFailure, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) Fail(ErrorCode::kIoFailure, "write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) Fail(ErrorCode::kIoFailure, "rename failed: " + ec.message());
}

}  // namespace pathforge::internal

#endif  // PATHFORGE_SRC_BINARY_IO_H_
