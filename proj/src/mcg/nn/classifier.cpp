#include "mcg/nn/classifier.hpp"

#include <cmath>
#include <numeric>

#include "mcg/nn/adam.hpp"

namespace mcg::nn {

namespace {

Tensor he_init(std::vector<int> shape, long fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  double std = std::sqrt(2.0 / (double)fan_in);
  for (long i = 0; i < t.numel(); ++i) t.data[i] = rng.gaussian(0.0, std);
  return t;
}

}  // namespace

Classifier Classifier::make(const std::string& arch, int num_classes, int C,
                            int H, int W, Rng& rng) {
  Classifier m;
  m.arch_ = arch;
  m.num_classes_ = num_classes;
  m.C_ = C;
  m.H_ = H;
  m.W_ = W;

  auto add_conv = [&](const std::string& name, int cin, int cout, int stride) {
    m.layers_.push_back({LayerSpec::conv, cout, 3, stride, 1});
    ParamGroup g;
    g.name = name;
    g.weight = he_init({cout, cin * 9}, (long)cin * 9, rng);
    g.bias = Tensor::zeros({cout});
    m.groups_.push_back(std::move(g));
  };
  auto add_fc = [&](const std::string& name, long in, int out) {
    m.layers_.push_back({LayerSpec::fc, out});
    ParamGroup g;
    g.name = name;
    g.weight = he_init({out, (int)in}, in, rng);
    g.bias = Tensor::zeros({out});
    m.groups_.push_back(std::move(g));
  };
  auto add_relu = [&] { m.layers_.push_back({LayerSpec::relu_act}); };

  auto out_dim = [](int d, int stride) { return (d + 2 - 3) / stride + 1; };

  if (arch == "linear") {
    add_fc("fc1", (long)C * H * W, num_classes);
  } else if (arch == "cnn_a") {
    int h = H, w = W;
    add_conv("conv1", C, 8, 1);
    add_relu();
    add_conv("conv2", 8, 8, 2);
    add_relu();
    h = out_dim(h, 2), w = out_dim(w, 2);
    add_conv("conv3", 8, 16, 2);
    add_relu();
    h = out_dim(h, 2), w = out_dim(w, 2);
    add_conv("conv4", 16, 16, 2);
    add_relu();
    h = out_dim(h, 2), w = out_dim(w, 2);
    add_fc("fc1", (long)16 * h * w, num_classes);
  } else if (arch == "cnn_b") {
    int h = out_dim(H, 2), w = out_dim(W, 2);
    add_conv("conv1", C, 12, 2);
    add_relu();
    add_conv("conv2", 12, 16, 2);
    add_relu();
    h = out_dim(h, 2), w = out_dim(w, 2);
    add_fc("fc1", (long)16 * h * w, 64);
    add_relu();
    add_fc("fc2", 64, num_classes);
  } else {
    throw ConfigError("unknown architecture: " + arch);
  }
  return m;
}

Classifier::TapeParams Classifier::params_on_tape(ad::Tape& t) const {
  TapeParams p;
  for (const auto& g : groups_) {
    if (g.trainable) {
      p.weights.push_back(t.input(g.weight.data, g.weight.shape));
      p.biases.push_back(t.input(g.bias.data, g.bias.shape));
    } else {
      p.weights.push_back(t.constant(g.weight.data, g.weight.shape));
      p.biases.push_back(t.constant(g.bias.data, g.bias.shape));
    }
  }
  return p;
}

ad::Var Classifier::logits(ad::Tape& t, ad::Var x, const TapeParams& p) const {
  ad::Var h = x;
  std::size_t gi = 0;
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerSpec::conv:
        h = t.conv2d(h, p.weights[gi], p.biases[gi], l.k, l.k, l.stride,
                     l.pad);
        ++gi;
        break;
      case LayerSpec::fc:
        h = t.linear(p.weights[gi], p.biases[gi],
                     t.reshape(h, {(int)t.val(h).size()}));
        ++gi;
        break;
      case LayerSpec::relu_act:
        h = t.relu(h);
        break;
    }
  }
  return h;
}

void Classifier::check_input(const Tensor& x) const {
  if (x.shape != std::vector<int>{C_, H_, W_})
    throw ShapeError("classifier input shape mismatch");
}

Arr Classifier::scores(const Tensor& x) const {
  check_input(x);
  ad::Tape t(false);
  ad::Var xv = t.constant(x.data, x.shape);
  ad::Var lp = log_probs(t, xv, params_on_tape(t));
  return t.val(lp).exp();
}

double Classifier::test_error(const Dataset& d) const {
  if (d.size() == 0) throw DataError("empty dataset");
  long wrong = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (argmax_index(scores(d.images[i])) != d.labels[i]) ++wrong;
  return (double)wrong / (double)d.size();
}

Classifier freeze_except_last(const Classifier& model, int n_groups) {
  if (n_groups <= 0) throw ConfigError("freeze_except_last: n_groups <= 0");
  Classifier m = model;
  int total = (int)m.groups().size();
  if (n_groups > total)
    throw ConfigError("freeze_except_last: n_groups exceeds group count");
  for (int i = 0; i < total; ++i)
    m.groups()[i].trainable = i >= total - n_groups;
  return m;
}

Classifier train_classifier(const Dataset& train, const std::string& arch,
                            const TrainConfig& cfg, int C, int H, int W) {
  if (train.size() == 0 || train.num_classes < 2)
    throw DataError("train_classifier: need a non-empty dataset with >= 2 classes");
  Rng rng(cfg.seed);
  Classifier m = Classifier::make(arch, train.num_classes, C, H, W, rng);

  Adam opt(cfg.lr);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int e = 0; e < cfg.epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::size_t bn = std::min<std::size_t>(cfg.batch_size, order.size() - b);
      ad::Tape t;
      auto p = m.params_on_tape(t);
      std::vector<ad::Var> losses;
      for (std::size_t j = 0; j < bn; ++j) {
        const Tensor& x = train.images[order[b + j]];
        int y = train.labels[order[b + j]];
        ad::Var lp = m.log_probs(t, t.constant(x.data, x.shape), p);
        losses.push_back(t.neg(t.gather1(lp, y)));
      }
      ad::Var loss = t.mean(t.concat(losses));
      t.backward(loss);

      std::vector<Arr*> params;
      std::vector<const Arr*> grads;
      for (std::size_t gi = 0; gi < m.groups().size(); ++gi) {
        params.push_back(&m.groups()[gi].weight.data);
        grads.push_back(&t.grad(p.weights[gi]));
        params.push_back(&m.groups()[gi].bias.data);
        grads.push_back(&t.grad(p.biases[gi]));
      }
      opt.step(params, grads);
    }
  }
  return m;
}

}  // namespace mcg::nn
