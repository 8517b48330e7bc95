// Command-line front end. Links only the C API so it exercises exactly
// what an embedding application would see.
#include <CLI11.hpp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "mcg/mcg.h"

int main(int argc, char** argv) {
  CLI::App app{"MCG: meta-learned black-box adversarial attack toolkit"};
  app.require_subcommand(1);

  struct VerbArgs {
    std::string config;
    std::vector<std::string> sets;
  };

  static const std::vector<std::pair<const char*, const char*>> verbs = {
      {"zoo-train", "train a classifier checkpoint on the configured data"},
      {"pgd-corpus", "build the white-box perturbation corpus"},
      {"pretrain", "fit the generator by maximum likelihood on the corpus"},
      {"meta-train", "batch-REPTILE meta-training of the generator"},
      {"attack", "run a black-box attack experiment and emit reports"},
      {"report", "recompute metrics from a persisted per-example JSONL"},
      {"curve", "emit the ASR-vs-query-budget table for plotting"}};

  std::vector<std::shared_ptr<VerbArgs>> args;
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : verbs) {
    auto a = std::make_shared<VerbArgs>();
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", a->config, "flat-key JSON config file");
    sub->add_option("--set", a->sets,
                    "key=value override, applied after the config file");
    args.push_back(a);
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    mcg_session* session = mcg_session_new();
    int rc = MCG_OK;
    for (const auto& assignment : args[i]->sets) {
      rc = mcg_set_option(session, assignment.c_str());
      if (rc != MCG_OK) break;
    }
    if (rc == MCG_OK)
      rc = mcg_run(session, verbs[i].first,
                   args[i]->config.empty() ? nullptr
                                           : args[i]->config.c_str());
    if (rc != MCG_OK)
      std::fprintf(stderr, "mcg: %s\n", mcg_last_error(session));
    mcg_session_free(session);
    return rc;
  }
  return MCG_OK;
}
