#include "mcg/data/datasets.hpp"

#include <array>
#include <cmath>
#include <fstream>

namespace mcg::data {

namespace {

constexpr std::array<std::array<double, 3>, 8> kPalette = {{
    {0.80, 0.25, 0.25},  // red
    {0.25, 0.80, 0.25},  // green
    {0.25, 0.35, 0.80},  // blue
    {0.78, 0.78, 0.25},  // yellow
    {0.75, 0.30, 0.75},  // magenta
    {0.30, 0.75, 0.75},  // cyan
    {0.85, 0.55, 0.25},  // orange
    {0.60, 0.60, 0.60},  // gray
}};

bool inside_shape(int kind, double dx, double dy, double r) {
  switch (kind % 5) {
    case 0:  // disc
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::abs(dx) <= r * 0.85 && std::abs(dy) <= r * 0.85;
    case 2: {  // upward triangle
      if (dy < -r || dy > r) return false;
      double half = (dy + r) / (2.0 * r) * r;
      return std::abs(dx) <= half;
    }
    case 3: {  // ring
      double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.25 * r * r;
    }
    default:  // plus
      return (std::abs(dx) <= r / 3.0 && std::abs(dy) <= r) ||
             (std::abs(dy) <= r / 3.0 && std::abs(dx) <= r);
  }
}

}  // namespace

nn::Dataset make_shapes(int n, const ShapesConfig& cfg, std::uint64_t seed) {
  if (n <= 0 || cfg.num_classes < 2)
    throw DataError("make_shapes: need n > 0 and >= 2 classes");
  Rng rng(seed);
  nn::Dataset d;
  d.num_classes = cfg.num_classes;
  int H = cfg.height, W = cfg.width;
  for (int i = 0; i < n; ++i) {
    int k = i % cfg.num_classes;
    double cx = W / 2.0 + rng.uniform(-W / 8.0, W / 8.0);
    double cy = H / 2.0 + rng.uniform(-H / 8.0, H / 8.0);
    double r = H / 4.0 + rng.uniform(-H / 10.0, H / 10.0);
    double tone = rng.uniform(-0.06, 0.06);
    const auto& col =
        cfg.random_colors
            ? kPalette[(std::size_t)rng.uniform_int(0, kPalette.size() - 1)]
            : kPalette[k % kPalette.size()];
    // per-channel random shading ramp: a coarse nuisance that forces
    // classifiers to ignore low-frequency intensity patterns
    std::array<double, 3> gx{}, gy{};
    if (cfg.gradient > 0) {
      for (int c = 0; c < 3; ++c) {
        gx[c] = rng.uniform(-cfg.gradient, cfg.gradient);
        gy[c] = rng.uniform(-cfg.gradient, cfg.gradient);
      }
    }
    Tensor img = Tensor::zeros({3, H, W});
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        bool in = inside_shape(k, x - cx, y - cy, r);
        for (int c = 0; c < 3; ++c) {
          double v = in ? col[c] + tone : cfg.background;
          v += gx[c] * (x / (double)W - 0.5) + gy[c] * (y / (double)H - 0.5);
          v += rng.gaussian(0.0, cfg.noise);
          img.at(c, y, x) = std::clamp(v, 0.02, 0.98);
        }
      }
    }
    d.images.push_back(std::move(img));
    d.labels.push_back(k);
  }
  return d;
}

namespace {

std::ifstream open_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  return f;
}

void read_cifar_batch(const std::string& path, nn::Dataset& d) {
  auto f = open_binary(path);
  std::vector<unsigned char> rec(3073);
  while (f.read((char*)rec.data(), rec.size())) {
    Tensor img = Tensor::zeros({3, 32, 32});
    for (long i = 0; i < 3072; ++i) img.data[i] = rec[1 + i] / 255.0;
    d.images.push_back(std::move(img));
    d.labels.push_back(rec[0]);
  }
}

std::uint32_t read_be32(std::ifstream& f) {
  unsigned char b[4];
  f.read((char*)b, 4);
  return ((std::uint32_t)b[0] << 24) | (b[1] << 16) | (b[2] << 8) | b[3];
}

}  // namespace

nn::Dataset load_cifar10(const std::string& dir, bool train) {
  nn::Dataset d;
  d.num_classes = 10;
  if (train) {
    for (int i = 1; i <= 5; ++i)
      read_cifar_batch(dir + "/data_batch_" + std::to_string(i) + ".bin", d);
  } else {
    read_cifar_batch(dir + "/test_batch.bin", d);
  }
  if (d.images.empty()) throw DataError("no CIFAR-10 records in " + dir);
  return d;
}

nn::Dataset load_mnist(const std::string& images_path,
                       const std::string& labels_path) {
  auto fi = open_binary(images_path);
  auto fl = open_binary(labels_path);
  if (read_be32(fi) != 2051 || read_be32(fl) != 2049)
    throw DataError("bad MNIST idx magic");
  std::uint32_t n = read_be32(fi);
  if (read_be32(fl) != n) throw DataError("MNIST image/label count mismatch");
  std::uint32_t h = read_be32(fi), w = read_be32(fi);
  nn::Dataset d;
  d.num_classes = 10;
  std::vector<unsigned char> buf((std::size_t)h * w);
  for (std::uint32_t i = 0; i < n; ++i) {
    fi.read((char*)buf.data(), buf.size());
    Tensor img = Tensor::zeros({1, (int)h, (int)w});
    for (std::size_t j = 0; j < buf.size(); ++j) img.data[j] = buf[j] / 255.0;
    unsigned char lbl;
    fl.read((char*)&lbl, 1);
    d.images.push_back(std::move(img));
    d.labels.push_back(lbl);
  }
  return d;
}

}  // namespace mcg::data
