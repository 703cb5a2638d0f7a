#include "temp/model/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace temp::model {

void BinaryWriter::bytes(std::span<const char> data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void BinaryWriter::f32s(std::span<const float> values) {
  buffer_.reserve(buffer_.size() + 4 * values.size());
  for (float v : values) f32(v);
}

void BinaryWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(std::span<const char>(s.data(), s.size()));
}

void BinaryWriter::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move " + tmp + " to " + path);
}

BinaryReader BinaryReader::open(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return BinaryReader(std::move(data));
}

void BinaryReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw std::runtime_error("truncated binary container");
}

std::vector<char> BinaryReader::bytes(std::size_t n) {
  need(n);
  std::vector<char> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                        data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }

std::vector<float> BinaryReader::f32s(std::size_t n) {
  need(4 * n);
  std::vector<float> out(n);
  for (float& v : out) v = f32();
  return out;
}

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  auto b = bytes(n);
  return std::string(b.begin(), b.end());
}

}  // namespace temp::model
