#ifndef MCG_IO_ARCHIVE_HPP
#define MCG_IO_ARCHIVE_HPP

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "mcg/tensor.hpp"

namespace mcg::io {

// Named-array container with a JSON metadata block. Backs model
// checkpoints, generator checkpoints and the PGD corpus.
struct Archive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> entries;

  void add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;  // CheckpointError

  void save(const std::string& path) const;
  static Archive load(const std::string& path);
};

}  // namespace mcg::io

#endif
