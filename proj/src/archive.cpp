#include "avae/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "avae/errors.hpp"

namespace avae {
namespace {

constexpr const char* kMagic = "avae-archive 1";

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

}  // namespace

std::filesystem::path archive_header_path(const std::filesystem::path& base) {
  return std::filesystem::path(base.string() + ".hdr");
}

std::filesystem::path archive_data_path(const std::filesystem::path& base) {
  return std::filesystem::path(base.string() + ".bin");
}

bool archive_exists(const std::filesystem::path& base) {
  return std::filesystem::exists(archive_header_path(base)) &&
         std::filesystem::exists(archive_data_path(base));
}

const Tensor& Archive::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("archive has no tensor '" + name + "'");
}

bool Archive::has_tensor(const std::string& name) const {
  for (const auto& [n, _] : tensors) {
    if (n == name) return true;
  }
  return false;
}

const std::string& Archive::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("archive has no meta key '" + key + "'");
  return it->second;
}

void write_archive(const std::filesystem::path& base, const Archive& archive) {
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  // Write to temporaries and rename so a crash never leaves a torn pair.
  const auto hdr = archive_header_path(base);
  const auto bin = archive_data_path(base);
  const auto hdr_tmp = std::filesystem::path(hdr.string() + ".tmp");
  const auto bin_tmp = std::filesystem::path(bin.string() + ".tmp");

  std::ofstream data(bin_tmp, std::ios::binary | std::ios::trunc);
  std::ofstream head(hdr_tmp, std::ios::trunc);
  if (!data || !head) throw IoError("cannot write archive at " + base.string());

  head << kMagic << '\n';
  for (const auto& [k, v] : archive.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("archive meta key/value not representable: " + k);
    }
    head << "meta " << k << ' ' << v << '\n';
  }
  std::size_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    if (name.find_first_of(" \t\n") != std::string::npos) {
      throw ContractError("archive tensor name contains whitespace: " + name);
    }
    head << "tensor " << name << ' ' << offset << ' ' << t.rank();
    for (std::size_t d : t.shape()) head << ' ' << d;
    head << '\n';
    for (double v : t.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      bits = to_little(bits);
      data.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += t.size();
  }
  data.close();
  head.close();
  if (!data || !head) throw IoError("short write for archive " + base.string());
  std::filesystem::rename(bin_tmp, bin);
  std::filesystem::rename(hdr_tmp, hdr);
}

Archive read_archive(const std::filesystem::path& base) {
  const auto hdr = archive_header_path(base);
  std::ifstream head(hdr);
  if (!head) throw IoError("cannot open archive header " + hdr.string());
  std::string line;
  if (!std::getline(head, line) || line != kMagic) {
    throw FormatError(hdr.string() + ": bad archive magic");
  }

  std::ifstream data(archive_data_path(base), std::ios::binary);
  if (!data) throw IoError("cannot open archive data " + archive_data_path(base).string());
  data.seekg(0, std::ios::end);
  const auto total = static_cast<std::size_t>(data.tellg()) / sizeof(double);

  Archive archive;
  std::size_t line_no = 1;
  while (std::getline(head, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string kind;
    in >> kind;
    if (kind == "meta") {
      std::string key;
      in >> key;
      std::string value;
      if (in.peek() == ' ') in.get();
      std::getline(in, value);
      archive.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t offset = 0, rank = 0;
      if (!(in >> name >> offset >> rank)) {
        throw FormatError(hdr.string() + ":" + std::to_string(line_no) + ": malformed tensor record");
      }
      Shape shape(rank);
      for (auto& d : shape) {
        if (!(in >> d)) {
          throw FormatError(hdr.string() + ":" + std::to_string(line_no) + ": missing dimension");
        }
      }
      const std::size_t n = shape_size(shape);
      if (offset + n > total) {
        throw FormatError(hdr.string() + ":" + std::to_string(line_no) + ": tensor '" + name +
                          "' extends past end of data file");
      }
      std::vector<double> values(n);
      data.seekg(static_cast<std::streamoff>(offset * sizeof(double)));
      for (auto& v : values) {
        std::uint64_t bits;
        data.read(reinterpret_cast<char*>(&bits), sizeof bits);
        bits = to_little(bits);
        std::memcpy(&v, &bits, sizeof v);
      }
      archive.put(name, Tensor(std::move(shape), std::move(values)));
    } else {
      throw FormatError(hdr.string() + ":" + std::to_string(line_no) + ": unknown record '" + kind + "'");
    }
  }
  return archive;
}

}  // namespace avae
