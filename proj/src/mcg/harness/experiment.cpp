#include "mcg/harness/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mcg/attack/attacker.hpp"
#include "mcg/data/datasets.hpp"
#include "mcg/harness/checkpoint.hpp"
#include "mcg/loss/pgd.hpp"
#include "mcg/meta/episode.hpp"
#include "mcg/meta/train.hpp"
#include "mcg/oracle/oracle.hpp"
#include "mcg/oracle/remote.hpp"

namespace mcg::harness {

namespace {

std::string resolve(const Config& cfg, const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(cfg.output_dir()) / p).string();
}

std::string resolve_key(const Config& cfg, const std::string& key) {
  return resolve(cfg, cfg.require_string(key));
}

void ensure_parent(const std::string& path) {
  auto dir = std::filesystem::path(path).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

loss::PgdConfig pgd_config(const Config& cfg) {
  loss::PgdConfig p;
  p.epsilon = cfg.require_double("pgd.epsilon");
  p.step_size = cfg.get_double("pgd.step_size", p.step_size);
  p.iters = (int)cfg.get_int("pgd.iters", p.iters);
  return p;
}

flow::AdaptScope parse_scope(const std::string& name) {
  if (name == "all") return flow::AdaptScope::all;
  if (name == "gaussian_only") return flow::AdaptScope::gaussian_only;
  throw ConfigError("unknown adaptation scope: " + name);
}

meta::InnerConfig inner_config(const Config& cfg, const std::string& prefix) {
  meta::InnerConfig ic;
  ic.k = (int)cfg.get_int(prefix + ".k", ic.k);
  ic.alpha = cfg.get_double(prefix + ".alpha", ic.alpha);
  ic.samples_per_step =
      (int)cfg.get_int(prefix + ".samples", ic.samples_per_step);
  ic.temperature = cfg.get_double(prefix + ".temperature", ic.temperature);
  ic.confidence = cfg.get_double(prefix + ".confidence", ic.confidence);
  ic.scope = parse_scope(cfg.get_string(prefix + ".scope", "all"));
  return ic;
}

nlohmann::json attacker_params(const Config& cfg) {
  nlohmann::json p = nlohmann::json::object();
  for (const char* key :
       {"p0", "step", "freq_fraction", "sigma", "population", "eta"}) {
    std::string full = std::string("attacker.") + key;
    auto it = cfg.entries().find(full);
    if (it != cfg.entries().end()) p[key] = it->second;
  }
  return p;
}

oracle::ScoreFn target_score_fn(const Config& cfg,
                                const nn::Classifier* local_target) {
  oracle::ScoreFn fn;
  if (local_target)
    fn = oracle::model_score_fn(*local_target);
  else {
    oracle::RemoteConfig rc;
    rc.host = cfg.get_string("remote.host", rc.host);
    rc.port = (int)cfg.get_int("remote.port", rc.port);
    rc.path = cfg.get_string("remote.path", rc.path);
    rc.num_classes = (int)cfg.get_int("remote.num_classes", rc.num_classes);
    rc.retries = (int)cfg.get_int("remote.retries", rc.retries);
    rc.timeout_seconds =
        (int)cfg.get_int("remote.timeout", rc.timeout_seconds);
    fn = oracle::remote_score_fn(rc);
  }
  std::string defense = cfg.get_string("defense.kind", "none");
  if (defense == "none") return fn;
  oracle::DefenseWrapper w;
  if (defense == "snd") {
    w.kind = oracle::DefenseWrapper::Kind::snd;
    w.sigma = cfg.get_double("defense.sigma", 0.01);
  } else if (defense == "jpeg_dct") {
    w.kind = oracle::DefenseWrapper::Kind::jpeg_dct;
    w.keep_fraction = cfg.get_double("defense.keep_fraction", 0.25);
  } else {
    throw ConfigError("unknown defense kind: " + defense);
  }
  return oracle::apply_defense(std::move(fn), w,
                               (std::uint64_t)cfg.get_int("defense.seed", 0));
}

// Evaluation slice [offset, offset+count) of the dataset.
std::vector<int> eval_ids(const Config& cfg, const nn::Dataset& data,
                          const std::string& prefix) {
  long offset = cfg.get_int(prefix + ".offset", 0);
  long count = cfg.get_int(prefix + ".count", (long)data.size() - offset);
  if (offset < 0 || count < 1 || offset + count > (long)data.size())
    throw ConfigError(prefix + ".offset/count outside the dataset");
  std::vector<int> ids;
  for (long i = 0; i < count; ++i) ids.push_back((int)(offset + i));
  return ids;
}

}  // namespace

nn::Dataset load_dataset(const Config& cfg) {
  std::string kind = cfg.get_string("data.kind", "shapes");
  if (kind == "shapes") {
    data::ShapesConfig sc;
    sc.num_classes = (int)cfg.get_int("data.classes", sc.num_classes);
    sc.height = (int)cfg.get_int("data.height", sc.height);
    sc.width = (int)cfg.get_int("data.width", sc.width);
    sc.background = cfg.get_double("data.background", sc.background);
    sc.noise = cfg.get_double("data.noise", sc.noise);
    sc.gradient = cfg.get_double("data.gradient", sc.gradient);
    sc.random_colors = cfg.get_bool("data.random_colors", sc.random_colors);
    long n = cfg.require_int("data.count");
    if (n < 1) throw ConfigError("data.count must be positive");
    return data::make_shapes((int)n, sc,
                             (std::uint64_t)cfg.get_int("data.seed", 0));
  }
  if (kind == "cifar10")
    return data::load_cifar10(cfg.require_string("data.dir"),
                              cfg.get_bool("data.train", true));
  if (kind == "mnist")
    return data::load_mnist(cfg.require_string("data.images"),
                            cfg.require_string("data.labels"));
  throw ConfigError("unknown data.kind: " + kind);
}

void run_zoo_train(const Config& cfg) {
  nn::Dataset data = load_dataset(cfg);
  nn::TrainConfig tc;
  tc.epochs = (int)cfg.get_int("zoo.epochs", tc.epochs);
  tc.lr = cfg.get_double("zoo.lr", tc.lr);
  tc.batch_size = (int)cfg.get_int("zoo.batch_size", tc.batch_size);
  tc.seed = (std::uint64_t)cfg.get_int("zoo.seed", 0);
  const Tensor& sample = data.images.at(0);
  nn::Classifier model = nn::train_classifier(
      data, cfg.require_string("zoo.arch"), tc, sample.shape[0],
      sample.shape[1], sample.shape[2]);
  std::string out = resolve_key(cfg, "zoo.out");
  ensure_parent(out);
  save_classifier(out, model);
}

void run_pgd_corpus(const Config& cfg) {
  nn::Dataset data = load_dataset(cfg);
  nn::Classifier model = load_classifier(resolve_key(cfg, "pgd.model"));
  loss::PgdConfig pc = pgd_config(cfg);
  std::vector<int> ids = eval_ids(cfg, data, "pgd");
  nn::Dataset slice;
  slice.num_classes = data.num_classes;
  for (int id : ids) {
    slice.images.push_back(data.images[id]);
    slice.labels.push_back(data.labels[id]);
  }
  loss::PgdCorpus corpus = make_pgd_corpus(slice, model, pc);
  for (auto& id : corpus.ids) id = ids[id];  // back to dataset ids
  corpus.meta["epsilon"] = pc.epsilon;
  corpus.meta["model"] = cfg.require_string("pgd.model");
  std::string out = resolve_key(cfg, "pgd.out");
  ensure_parent(out);
  save_corpus(out, corpus);
}

void run_pretrain(const Config& cfg) {
  nn::Dataset data = load_dataset(cfg);
  loss::PgdCorpus corpus = loss::load_corpus(resolve_key(cfg, "pretrain.corpus"));

  flow::FlowParams params = [&] {
    if (cfg.has("pretrain.init"))
      return load_flow(resolve_key(cfg, "pretrain.init"));
    const Tensor& sample = data.images.at(0);
    flow::FlowConfig fc;
    fc.image_channels = sample.shape[0];
    fc.image_height = sample.shape[1];
    fc.image_width = sample.shape[2];
    fc.dct_factor = (int)cfg.get_int("flow.dct_factor", fc.dct_factor);
    fc.blocks = (int)cfg.get_int("flow.blocks", fc.blocks);
    fc.steps = (int)cfg.get_int("flow.steps", fc.steps);
    fc.hidden = (int)cfg.get_int("flow.hidden", fc.hidden);
    fc.cond_channels =
        (int)cfg.get_int("flow.cond_channels", fc.cond_channels);
    fc.epsilon = cfg.require_double("flow.epsilon");
    Rng rng((std::uint64_t)cfg.get_int("pretrain.seed", 0));
    return flow::make_flow(fc, rng);
  }();

  meta::PretrainConfig pc;
  pc.lr = cfg.get_double("pretrain.lr", pc.lr);
  pc.epochs = (int)cfg.get_int("pretrain.epochs", pc.epochs);
  pc.batch_size = (int)cfg.get_int("pretrain.batch_size", pc.batch_size);
  pc.seed = (std::uint64_t)cfg.get_int("pretrain.seed", 0);

  std::vector<double> curve;
  params = meta::pretrain_generator(corpus, data, std::move(params), pc,
                                    &curve);
  std::string out = resolve_key(cfg, "pretrain.out");
  ensure_parent(out);
  save_flow(out, params);
  if (cfg.has("pretrain.curve")) {
    std::string cpath = resolve_key(cfg, "pretrain.curve");
    ensure_parent(cpath);
    std::ofstream f(cpath);
    if (!f) throw DataError("cannot write " + cpath);
    f << "epoch\tnll\n";
    for (std::size_t e = 0; e < curve.size(); ++e)
      f << e << "\t" << curve[e] << "\n";
  }
}

void run_meta_train(const Config& cfg) {
  nn::Dataset tasks = load_dataset(cfg);
  nn::Classifier surrogate =
      load_classifier(resolve_key(cfg, "meta.surrogate"));
  flow::FlowParams pretrained = load_flow(resolve_key(cfg, "meta.in"));

  meta::MetaTrainConfig mc;
  mc.n_tasks_per_batch = (int)cfg.get_int("meta.tasks", mc.n_tasks_per_batch);
  mc.batches = (int)cfg.get_int("meta.batches", mc.batches);
  mc.beta = cfg.get_double("meta.beta", mc.beta);
  mc.inner = inner_config(cfg, "meta");
  mc.seed = (std::uint64_t)cfg.get_int("meta.seed", 0);
  std::string out = resolve_key(cfg, "meta.out");
  ensure_parent(out);
  mc.checkpoint_interval = (int)cfg.get_int("meta.checkpoint_interval", 0);
  if (mc.checkpoint_interval > 0)
    mc.on_checkpoint = [&](int batch, const flow::FlowParams& p) {
      save_flow(out + ".batch" + std::to_string(batch), p);
    };

  std::vector<meta::MetaTrainLogRow> log;
  flow::FlowParams trained =
      meta::meta_train(mc, std::move(pretrained), tasks, surrogate, &log);
  save_flow(out, trained);

  if (cfg.has("meta.log")) {
    std::string lpath = resolve_key(cfg, "meta.log");
    ensure_parent(lpath);
    std::ofstream f(lpath);
    if (!f) throw DataError("cannot write " + lpath);
    for (const auto& row : log)
      f << nlohmann::json{{"batch", row.batch},
                          {"loss_before", row.loss_before},
                          {"loss_after", row.loss_after},
                          {"param_delta_norm", row.param_delta_norm}}
               .dump()
        << "\n";
  }
}

MetricsReport run_attack(const Config& cfg) {
  nn::Dataset data = load_dataset(cfg);
  const Tensor& sample = data.images.at(0);
  const double epsilon = cfg.require_double("attack.epsilon");
  const long budget = cfg.require_int("attack.budget");
  if (epsilon <= 0) throw ConfigError("attack.epsilon must be positive");
  if (budget < 1) throw ConfigError("attack.budget must be >= 1");
  const bool mcg_on = cfg.get_bool("attack.mcg", true);
  const bool targeted =
      cfg.get_string("attack.goal", "untargeted") == "targeted";
  const std::uint64_t seed = (std::uint64_t)cfg.get_int("attack.seed", 0);

  // checkpoint refs, validated against the experiment before any query
  nlohmann::json refs = nlohmann::json::object();
  std::unique_ptr<nn::Classifier> target;
  if (!cfg.get_bool("target.remote", false)) {
    std::string path = resolve_key(cfg, "target.checkpoint");
    target = std::make_unique<nn::Classifier>(load_classifier(path));
    refs["target"] = {{"path", path}, {"hash", file_hash(path)}};
    if (target->in_channels() != sample.shape[0] ||
        target->in_height() != sample.shape[1] ||
        target->in_width() != sample.shape[2] ||
        target->num_classes() != data.num_classes)
      throw ConfigError("target checkpoint does not match the dataset");
  }

  meta::EpisodeConfig ec;
  std::unique_ptr<meta::EpisodeState> state;
  flow::FlowParams generator;
  if (mcg_on) {
    std::string gpath = resolve_key(cfg, "mcg.generator");
    std::string spath = resolve_key(cfg, "mcg.surrogate");
    generator = load_flow(gpath);
    nn::Classifier surrogate = load_classifier(spath);
    refs["generator"] = {{"path", gpath}, {"hash", file_hash(gpath)}};
    refs["surrogate"] = {{"path", spath}, {"hash", file_hash(spath)}};
    if (generator.cfg.image_channels != sample.shape[0] ||
        generator.cfg.image_height != sample.shape[1] ||
        generator.cfg.image_width != sample.shape[2])
      throw ConfigError("generator checkpoint does not match the dataset");
    if (std::abs(generator.cfg.epsilon - epsilon) > 1e-12)
      throw ConfigError("generator epsilon differs from attack.epsilon");
    if (surrogate.in_channels() != sample.shape[0] ||
        surrogate.in_height() != sample.shape[1] ||
        surrogate.in_width() != sample.shape[2] ||
        surrogate.num_classes() != data.num_classes)
      throw ConfigError("surrogate checkpoint does not match the dataset");

    ec.do_finetune = cfg.get_bool("episode.finetune", true);
    ec.do_adapt = cfg.get_bool("episode.adapt", true);
    ec.rounds = (int)cfg.get_int("episode.rounds", ec.rounds);
    ec.inner = inner_config(cfg, "episode");
    ec.finetune.m = (int)cfg.get_int("episode.m", ec.finetune.m);
    ec.finetune.s = (int)cfg.get_int("episode.s", ec.finetune.s);
    ec.finetune.lambda = cfg.get_double("episode.lambda", ec.finetune.lambda);
    ec.finetune.unfrozen_groups = (int)cfg.get_int(
        "episode.unfrozen_groups", ec.finetune.unfrozen_groups);
    std::size_t capacity =
        (std::size_t)cfg.get_int("episode.history", 64);
    state = std::make_unique<meta::EpisodeState>(
        generator,
        nn::freeze_except_last(surrogate, ec.finetune.unfrozen_groups),
        capacity);
  }

  auto attacker = attack::make_attacker(cfg.require_string("attack.attacker"),
                                        attacker_params(cfg));
  std::vector<int> ids = eval_ids(cfg, data, "attack");

  // goals are drawn up front from the seed alone so paired runs align
  Rng goal_rng(seed);
  std::vector<AttackGoal> goals;
  for (int id : ids) {
    int y = data.labels[id];
    if (!targeted) {
      goals.push_back(AttackGoal::untargeted(y));
    } else {
      int t = (int)goal_rng.uniform_int(0, data.num_classes - 2);
      if (t >= y) ++t;  // uniform over the non-true classes
      goals.push_back(AttackGoal::targeted(y, t));
    }
  }

  std::vector<ExampleRow> rows;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    oracle::TargetOracle oracle(target_score_fn(cfg, target.get()),
                                (std::uint64_t)budget);
    Rng ep_rng(seed ^ (0x9e3779b97f4a7c15ull * (std::uint64_t)(i + 1)));
    AttackResult r;
    if (mcg_on)
      r = meta::attack_episode(data.images[ids[i]], goals[i], *state, oracle,
                               *attacker, ec, ep_rng);
    else
      r = attacker->run(oracle, data.images[ids[i]], goals[i], epsilon, {},
                        ep_rng);
    ExampleRow row;
    row.image_id = ids[i];
    row.success = r.success;
    row.queries_used = r.queries_used;
    row.first_query_success = r.first_query_success;
    row.goal = targeted ? "targeted" : "untargeted";
    row.target_label = goals[i].target_label;
    rows.push_back(row);
  }

  MetricsReport report = compute_metrics(rows);
  std::string run_id = cfg.get_string("run.id", "attack");
  std::string stem = resolve(cfg, run_id);
  ensure_parent(stem);
  write_jsonl(stem + ".jsonl", rows);
  write_csv(stem + ".csv", run_id, report);
  nlohmann::json summary = {{"run_id", run_id},
                            {"report", report_to_json(report)},
                            {"config", cfg.to_json()},
                            {"checkpoints", refs},
                            {"mcg", mcg_on}};
  std::ofstream f(stem + ".summary.json");
  if (!f) throw DataError("cannot write " + stem + ".summary.json");
  f << summary.dump(2) << "\n";
  return report;
}

MetricsReport run_report(const Config& cfg) {
  auto rows = read_jsonl(resolve_key(cfg, "report.results"));
  MetricsReport report = compute_metrics(rows);
  if (cfg.has("report.out")) {
    std::string out = resolve_key(cfg, "report.out");
    ensure_parent(out);
    std::ofstream f(out);
    if (!f) throw DataError("cannot write " + out);
    f << report_to_json(report).dump(2) << "\n";
  }
  return report;
}

void run_curve(const Config& cfg) {
  auto rows = read_jsonl(resolve_key(cfg, "curve.results"));
  long budget = cfg.require_int("curve.budget");
  long points = cfg.get_int("curve.points", 20);
  if (budget < 1 || points < 1)
    throw ConfigError("curve.budget/points must be positive");
  std::vector<std::uint64_t> grid = {1};
  for (long j = 1; j <= points; ++j) {
    std::uint64_t q = (std::uint64_t)((double)j * (double)budget /
                                      (double)points + 0.5);
    if (q > grid.back()) grid.push_back(q);
  }
  std::string out = resolve_key(cfg, "curve.out");
  ensure_parent(out);
  write_curve_tsv(out, emit_curve(rows, grid));
}

void run_verb(const std::string& verb, const Config& cfg) {
  if (verb == "zoo-train") return run_zoo_train(cfg);
  if (verb == "pgd-corpus") return run_pgd_corpus(cfg);
  if (verb == "pretrain") return run_pretrain(cfg);
  if (verb == "meta-train") return run_meta_train(cfg);
  if (verb == "attack") {
    std::cout << report_to_json(run_attack(cfg)).dump(2) << "\n";
    return;
  }
  if (verb == "report") {
    std::cout << report_to_json(run_report(cfg)).dump(2) << "\n";
    return;
  }
  if (verb == "curve") return run_curve(cfg);
  throw ConfigError("unknown verb: " + verb);
}

}  // namespace mcg::harness
