#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

// Little-endian binary file helpers shared by the dataset and checkpoint
// formats. Reads track the byte offset so truncation and corruption errors
// can name the position.

namespace lsm::binio {

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for write: " + path);
    path_ = path;
  }
  void magic(const char* four) { out_.write(four, 4); }
  void u8(uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(uint32_t v) { put_le(v, 4); }
  void u64(uint64_t v) { put_le(v, 8); }
  void f64(double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 8);
    put_le(bits, 8);
  }
  void f64_array(const std::vector<double>& vs) {
    for (double v : vs) f64(v);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }

 private:
  void put_le(uint64_t v, int bytes) {
    char buf[8];
    for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(buf, bytes);
  }
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open for read: " + path);
  }
  void magic(const char* expect) {
    char buf[5] = {0};
    take(buf, 4);
    if (std::string(buf, 4) != expect)
      throw std::runtime_error(path_ + ": bad magic at byte 0, expected \"" + expect +
                               "\", got \"" + std::string(buf, 4) + "\"");
  }
  uint8_t u8() {
    char b;
    take(&b, 1);
    return static_cast<uint8_t>(b);
  }
  uint32_t u32() { return static_cast<uint32_t>(get_le(4)); }
  uint64_t u64() { return get_le(8); }
  double f64() {
    uint64_t bits = get_le(8);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  void f64_array(std::vector<double>& vs, size_t n) {
    vs.resize(n);
    for (size_t i = 0; i < n; ++i) vs[i] = f64();
  }
  std::string str() {
    uint32_t n = u32();
    std::string s(n, '\0');
    if (n) take(s.data(), n);
    return s;
  }
  uint64_t offset() const { return offset_; }

 private:
  void take(char* dst, size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n)
      throw std::runtime_error(path_ + ": truncated at byte " + std::to_string(offset_) +
                               " (wanted " + std::to_string(n) + " more)");
    offset_ += n;
  }
  uint64_t get_le(int bytes) {
    char buf[8];
    take(buf, static_cast<size_t>(bytes));
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
  }
  std::ifstream in_;
  std::string path_;
  uint64_t offset_ = 0;
};

}  // namespace lsm::binio
