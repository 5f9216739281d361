#pragma once

// Little-endian binary readers/writers shared by the checkpoint ("SNNC") and
// embedding ("EMBV") file formats. Writers buffer into a std::string and land
// on disk in one write; readers operate on a fully-loaded buffer and throw on
// any truncation or trailing garbage so fuzzed/corrupt files can never pass.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace snn {

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(uint16_t v) { raw_le(v); }
  void u32(uint32_t v) { raw_le(v); }
  void u64(uint64_t v) { raw_le(v); }
  void f32(float v) { raw_le(std::bit_cast<uint32_t>(v)); }
  void bytes(const void* p, size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  void str(const std::string& s) { buf_.append(s); }
  void f32_array(const float* p, size_t n) {
    static_assert(std::endian::native == std::endian::little,
                  "big-endian hosts need a byte-swapping f32_array");
    bytes(p, n * sizeof(float));
  }

  const std::string& data() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
  }

 private:
  template <typename T>
  void raw_le(T v) {
    static_assert(std::endian::native == std::endian::little,
                  "big-endian hosts need byte swaps here");
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf_.append(tmp, sizeof(T));
  }

  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string origin)
      : buf_(std::move(data)), origin_(std::move(origin)) {}

  static ByteReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string data((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path);
  }

  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint16_t u16() { return read_le<uint16_t>(); }
  uint32_t u32() { return read_le<uint32_t>(); }
  uint64_t u64() { return read_le<uint64_t>(); }
  float f32() { return std::bit_cast<float>(read_le<uint32_t>()); }

  std::string str(size_t n) {
    const char* p = take(n);
    return std::string(p, n);
  }

  void f32_array(float* out, size_t n) {
    static_assert(std::endian::native == std::endian::little,
                  "big-endian hosts need a byte-swapping f32_array");
    std::memcpy(out, take(n * sizeof(float)), n * sizeof(float));
  }

  size_t remaining() const { return buf_.size() - pos_; }

  // Every reader must end with this: leftover bytes mean the file does not
  // match the format and must be rejected, not silently ignored.
  void expect_end() const {
    if (pos_ != buf_.size())
      throw std::runtime_error(origin_ + ": trailing bytes after final record");
  }

 private:
  const char* take(size_t n) {
    if (buf_.size() - pos_ < n)
      throw std::runtime_error(origin_ + ": truncated file");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  template <typename T>
  T read_le() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }

  std::string buf_;
  std::string origin_;
  size_t pos_ = 0;
};

}  // namespace snn
