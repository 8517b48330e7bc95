#include "mcg/mcg.h"

#include <string>
#include <vector>

#include "mcg/errors.hpp"
#include "mcg/harness/config.hpp"
#include "mcg/harness/experiment.hpp"

struct mcg_session {
  std::string last_error;
  std::vector<std::string> overrides;
};

namespace {

int capture(mcg_session* s, const std::function<void()>& body) {
  if (!s) return MCG_ERR_RUNTIME;
  try {
    body();
    s->last_error.clear();
    return MCG_OK;
  } catch (const mcg::Error& e) {
    s->last_error = e.what();
    return (int)e.code();
  } catch (const std::exception& e) {
    s->last_error = e.what();
    return MCG_ERR_RUNTIME;
  }
}

}  // namespace

extern "C" {

const char* mcg_version(void) { return "0.1.0"; }

mcg_session* mcg_session_new(void) { return new mcg_session(); }

void mcg_session_free(mcg_session* s) { delete s; }

const char* mcg_last_error(const mcg_session* s) {
  return s ? s->last_error.c_str() : "null session";
}

int mcg_set_option(mcg_session* s, const char* assignment) {
  return capture(s, [&] {
    if (!assignment) throw mcg::ConfigError("null override");
    mcg::harness::Config probe;  // validate the syntax eagerly
    probe.set(assignment);
    s->overrides.emplace_back(assignment);
  });
}

int mcg_run(mcg_session* s, const char* verb, const char* config_path) {
  return capture(s, [&] {
    if (!verb) throw mcg::ConfigError("null verb");
    mcg::harness::Config cfg =
        config_path ? mcg::harness::Config::from_file(config_path)
                    : mcg::harness::Config();
    for (const auto& assignment : s->overrides) cfg.set(assignment);
    mcg::harness::run_verb(verb, cfg);
  });
}

}  // extern "C"
