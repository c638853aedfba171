#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "avae/tensor.hpp"

namespace avae {

/// Named tensors plus string metadata, persisted as two files:
///
///   <base>.bin  little-endian 64-bit floats, tensors back to back
///   <base>.hdr  text header
///
/// Header grammar (one record per line):
///
///   avae-archive 1
///   meta <key> <value to end of line>
///   tensor <name> <offset> <rank> <d0> ... <dN-1>
///
/// `offset` counts doubles from the start of the .bin file.
struct Archive {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void put(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
  const std::string& meta_at(const std::string& key) const;
};

void write_archive(const std::filesystem::path& base, const Archive& archive);
Archive read_archive(const std::filesystem::path& base);

std::filesystem::path archive_header_path(const std::filesystem::path& base);
std::filesystem::path archive_data_path(const std::filesystem::path& base);
bool archive_exists(const std::filesystem::path& base);

}  // namespace avae
