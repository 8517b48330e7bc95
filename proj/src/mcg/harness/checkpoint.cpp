#include "mcg/harness/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include "mcg/io/archive.hpp"

namespace mcg::harness {

void save_classifier(const std::string& path, const nn::Classifier& model) {
  io::Archive a;
  a.meta["kind"] = "classifier";
  a.meta["arch"] = model.arch();
  a.meta["num_classes"] = model.num_classes();
  a.meta["channels"] = model.in_channels();
  a.meta["height"] = model.in_height();
  a.meta["width"] = model.in_width();
  std::vector<std::string> names;
  std::vector<bool> trainable;
  for (const auto& g : model.groups()) {
    names.push_back(g.name);
    trainable.push_back(g.trainable);
    a.add(g.name + "/weight", g.weight);
    a.add(g.name + "/bias", g.bias);
  }
  a.meta["groups"] = names;
  a.meta["trainable"] = trainable;
  a.save(path);
}

nn::Classifier load_classifier(const std::string& path) {
  io::Archive a = io::Archive::load(path);
  if (a.meta.value("kind", "") != "classifier")
    throw CheckpointError(path + " is not a classifier checkpoint");
  Rng rng(0);  // structure only; every array is overwritten below
  nn::Classifier model = nn::Classifier::make(
      a.meta.at("arch").get<std::string>(), a.meta.at("num_classes").get<int>(),
      a.meta.at("channels").get<int>(), a.meta.at("height").get<int>(),
      a.meta.at("width").get<int>(), rng);
  auto names = a.meta.at("groups").get<std::vector<std::string>>();
  auto trainable = a.meta.at("trainable").get<std::vector<bool>>();
  if (names.size() != model.groups().size() || names.size() != trainable.size())
    throw CheckpointError(path + ": group list does not match architecture");
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto& g = model.groups()[i];
    if (g.name != names[i])
      throw CheckpointError(path + ": unexpected group " + names[i]);
    const Tensor& w = a.get(names[i] + "/weight");
    const Tensor& b = a.get(names[i] + "/bias");
    if (w.shape != g.weight.shape || b.shape != g.bias.shape)
      throw CheckpointError(path + ": shape mismatch in group " + names[i]);
    g.weight = w;
    g.bias = b;
    g.trainable = trainable[i];
  }
  return model;
}

void save_flow(const std::string& path, const flow::FlowParams& params) {
  io::Archive a;
  const auto& c = params.cfg;
  a.meta["kind"] = "flow";
  a.meta["image_channels"] = c.image_channels;
  a.meta["image_height"] = c.image_height;
  a.meta["image_width"] = c.image_width;
  a.meta["dct_factor"] = c.dct_factor;
  a.meta["blocks"] = c.blocks;
  a.meta["steps"] = c.steps;
  a.meta["hidden"] = c.hidden;
  a.meta["cond_channels"] = c.cond_channels;
  a.meta["epsilon"] = c.epsilon;
  params.for_each([&](const std::string& key, const Tensor& t) {
    a.add(key, t);
  });
  a.save(path);
}

flow::FlowParams load_flow(const std::string& path) {
  io::Archive a = io::Archive::load(path);
  if (a.meta.value("kind", "") != "flow")
    throw CheckpointError(path + " is not a generator checkpoint");
  flow::FlowConfig c;
  c.image_channels = a.meta.at("image_channels").get<int>();
  c.image_height = a.meta.at("image_height").get<int>();
  c.image_width = a.meta.at("image_width").get<int>();
  c.dct_factor = a.meta.at("dct_factor").get<int>();
  c.blocks = a.meta.at("blocks").get<int>();
  c.steps = a.meta.at("steps").get<int>();
  c.hidden = a.meta.at("hidden").get<int>();
  c.cond_channels = a.meta.at("cond_channels").get<int>();
  c.epsilon = a.meta.at("epsilon").get<double>();
  Rng rng(0);  // structure only; every array is overwritten below
  flow::FlowParams params = flow::make_flow(c, rng);
  params.for_each([&](const std::string& key, Tensor& t) {
    const Tensor& stored = a.get(key);
    if (stored.shape != t.shape)
      throw CheckpointError(path + ": shape mismatch at " + key);
    t = stored;
  });
  return params;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open for hashing: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= (unsigned char)buf[i];
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace mcg::harness
