#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sparsecut/tensor.hpp"

namespace sparsecut {

// Ordered collection of named tensors, stored on disk as two files:
//
//   <stem>.bin       tensors back to back, float64 little-endian, row-major
//   <stem>.manifest  text; first line "sparsecut-archive 1", then one line per
//                    tensor: "<name> <byte offset> <rank> <dim0> <dim1> ..."
//
// Names contain no whitespace. Writing the same archive twice gives
// byte-identical files.
class TensorArchive {
 public:
  void add(std::string name, Tensor tensor);
  [[nodiscard]] const Tensor& get(const std::string& name) const;
  [[nodiscard]] bool contains(const std::string& name) const;
  [[nodiscard]] const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }

  void save(const std::filesystem::path& stem) const;
  static TensorArchive load(const std::filesystem::path& stem);

  static std::filesystem::path manifest_path(const std::filesystem::path& stem);
  static std::filesystem::path data_path(const std::filesystem::path& stem);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace sparsecut
