#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace temp::model {

/// Little-endian encoder for the project's binary containers.
class BinaryWriter {
 public:
  void bytes(std::span<const char> data);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v);
  void f32s(std::span<const float> values);
  void str(const std::string& s);  // u32 length + bytes

  const std::vector<char>& buffer() const { return buffer_; }
  /// Writes to path via a temporary file and rename.
  void save(const std::string& path) const;

 private:
  std::vector<char> buffer_;
};

class BinaryReader {
 public:
  static BinaryReader open(const std::string& path);
  explicit BinaryReader(std::vector<char> data) : data_(std::move(data)) {}

  std::vector<char> bytes(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32();
  std::vector<float> f32s(std::size_t n);
  std::string str();
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace temp::model
