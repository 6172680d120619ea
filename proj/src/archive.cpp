#include "sparsecut/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "sparsecut/errors.hpp"

namespace sparsecut {

namespace {

constexpr const char* kMagic = "sparsecut-archive";
constexpr int kVersion = 1;

}  // namespace

void TensorArchive::add(std::string name, Tensor tensor) {
  if (name.empty() || std::any_of(name.begin(), name.end(), [](char c) {
        return c == ' ' || c == '\t' || c == '\n';
      })) {
    throw UsageError("archive entry names must be non-empty and contain no whitespace");
  }
  if (contains(name)) throw UsageError("duplicate archive entry '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw UsageError("archive has no entry '" + name + "'");
}

bool TensorArchive::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

std::filesystem::path TensorArchive::manifest_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".manifest");
}

std::filesystem::path TensorArchive::data_path(const std::filesystem::path& stem) {
  return std::filesystem::path(stem.string() + ".bin");
}

void TensorArchive::save(const std::filesystem::path& stem) const {
  std::ofstream manifest(manifest_path(stem), std::ios::binary);
  std::ofstream data(data_path(stem), std::ios::binary);
  if (!manifest || !data) throw UsageError("cannot write archive " + stem.string());
  manifest << kMagic << ' ' << kVersion << '\n';
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : entries_) {
    manifest << name << ' ' << offset << ' ' << tensor.rank();
    for (std::size_t d : tensor.shape()) manifest << ' ' << d;
    manifest << '\n';
    for (double v : tensor.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      data.write(bytes, 8);
    }
    offset += tensor.size() * 8;
  }
}

TensorArchive TensorArchive::load(const std::filesystem::path& stem) {
  std::ifstream manifest(manifest_path(stem));
  std::ifstream data(data_path(stem), std::ios::binary);
  if (!manifest || !data) throw UsageError("cannot open archive " + stem.string());
  std::string magic;
  int version = 0;
  manifest >> magic >> version;
  if (magic != kMagic || version != kVersion) {
    throw UsageError(manifest_path(stem).string() + ": not a version-1 tensor archive");
  }
  TensorArchive archive;
  std::string line;
  std::getline(manifest, line);
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name;
    std::uint64_t offset = 0;
    std::size_t rank = 0;
    if (!(fields >> name >> offset >> rank)) {
      throw UsageError("malformed manifest line: " + line);
    }
    Shape shape(rank);
    for (std::size_t& d : shape) {
      if (!(fields >> d)) throw UsageError("malformed manifest line: " + line);
    }
    Tensor tensor(shape);
    data.seekg(static_cast<std::streamoff>(offset));
    for (double& v : tensor.data()) {
      unsigned char bytes[8];
      if (!data.read(reinterpret_cast<char*>(bytes), 8)) {
        throw UsageError(data_path(stem).string() + ": truncated at entry '" + name + "'");
      }
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      v = std::bit_cast<double>(bits);
    }
    archive.add(std::move(name), std::move(tensor));
  }
  return archive;
}

}  // namespace sparsecut
