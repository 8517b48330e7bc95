#include "mcg/io/archive.hpp"

#include <cstdint>
#include <fstream>

namespace mcg::io {

namespace {
constexpr char kMagic[8] = {'M', 'C', 'G', 'A', 'R', '0', '1', '\n'};

void put_u64(std::ofstream& f, std::uint64_t v) {
  f.write((const char*)&v, sizeof v);
}
std::uint64_t get_u64(std::ifstream& f) {
  std::uint64_t v = 0;
  f.read((char*)&v, sizeof v);
  if (!f) throw CheckpointError("truncated archive");
  return v;
}
}  // namespace

void Archive::add(const std::string& name, Tensor t) {
  for (auto& [n, _] : entries)
    if (n == name) throw CheckpointError("duplicate entry " + name);
  entries.emplace_back(name, std::move(t));
}

bool Archive::has(const std::string& name) const {
  for (auto& [n, _] : entries)
    if (n == name) return true;
  return false;
}

const Tensor& Archive::get(const std::string& name) const {
  for (auto& [n, t] : entries)
    if (n == name) return t;
  throw CheckpointError("missing entry " + name);
}

void Archive::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write " + path);
  f.write(kMagic, sizeof kMagic);
  std::string meta_s = meta.dump();
  put_u64(f, meta_s.size());
  f.write(meta_s.data(), meta_s.size());
  put_u64(f, entries.size());
  for (const auto& [name, t] : entries) {
    put_u64(f, name.size());
    f.write(name.data(), name.size());
    put_u64(f, t.shape.size());
    for (int d : t.shape) {
      std::int64_t v = d;
      f.write((const char*)&v, sizeof v);
    }
    put_u64(f, t.data.size());
    f.write((const char*)t.data.data(), t.data.size() * sizeof(double));
  }
  if (!f) throw CheckpointError("write failed for " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path);
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::string(magic, 8) != std::string(kMagic, 8))
    throw CheckpointError("bad archive magic in " + path);
  Archive a;
  std::uint64_t meta_len = get_u64(f);
  std::string meta_s(meta_len, '\0');
  f.read(meta_s.data(), meta_len);
  if (!f) throw CheckpointError("truncated archive metadata");
  try {
    a.meta = nlohmann::json::parse(meta_s);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad archive metadata: ") + e.what());
  }
  std::uint64_t n = get_u64(f);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t name_len = get_u64(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    std::uint64_t ndim = get_u64(f);
    std::vector<int> shape(ndim);
    for (auto& d : shape) {
      std::int64_t v;
      f.read((char*)&v, sizeof v);
      d = (int)v;
    }
    std::uint64_t len = get_u64(f);
    Arr data(len);
    f.read((char*)data.data(), len * sizeof(double));
    if (!f) throw CheckpointError("truncated archive entry " + name);
    if ((std::uint64_t)Tensor::numel_of(shape) != len)
      throw CheckpointError("shape/data mismatch for " + name);
    a.entries.emplace_back(std::move(name), Tensor(std::move(shape),
                                                   std::move(data)));
  }
  return a;
}

}  // namespace mcg::io
