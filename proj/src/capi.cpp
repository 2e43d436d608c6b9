#include "eve_capi.h"

#include <cstring>
#include <memory>
#include <string>

#include "eve/error.hpp"
#include "eve/pipeline.hpp"

struct eve_run {
  eve::PipelineOptions opt;
  std::string last_error;
  bool started = false;
};

namespace {

void put_err(char* buf, size_t len, const std::string& msg) {
  if (!buf || len == 0) return;
  std::strncpy(buf, msg.c_str(), len - 1);
  buf[len - 1] = '\0';
}

}  // namespace

extern "C" {

eve_run* eve_run_open(const char* config_path, const char* out_dir, char* errbuf,
                      size_t errbuf_len) {
  if (!config_path || !out_dir) {
    put_err(errbuf, errbuf_len, "config_path and out_dir are required");
    return nullptr;
  }
  try {
    auto run = std::make_unique<eve_run>();
    run->opt.cfg = eve::parse_config_file(config_path);
    run->opt.out_dir = out_dir;
    return run.release();
  } catch (const std::exception& e) {
    put_err(errbuf, errbuf_len, e.what());
    return nullptr;
  }
}

eve_status eve_run_set_seed_override(eve_run* run, int64_t seed) {
  if (!run) return EVE_ERR_CONFIG;
  if (run->started) {
    run->last_error = "options must be set before the first stage";
    return EVE_ERR_CONFIG;
  }
  run->opt.seed_override = seed;
  return EVE_OK;
}

eve_status eve_run_set_sweep(eve_run* run, const char* spec) {
  if (!run) return EVE_ERR_CONFIG;
  if (run->started) {
    run->last_error = "options must be set before the first stage";
    return EVE_ERR_CONFIG;
  }
  if (!spec) {
    run->last_error = "sweep spec is required";
    return EVE_ERR_CONFIG;
  }
  try {
    run->opt.sweep = eve::parse_sweep(spec);
    return EVE_OK;
  } catch (const std::exception& e) {
    run->last_error = e.what();
    return EVE_ERR_CONFIG;
  }
}

eve_status eve_run_stage(eve_run* run, const char* name) {
  if (!run) return EVE_ERR_CONFIG;
  if (!name) {
    run->last_error = "stage name is required";
    return EVE_ERR_CONFIG;
  }
  run->started = true;
  try {
    eve::Pipeline pipeline(run->opt);
    const bool ok = pipeline.run_stage(name);
    if (!ok) {
      run->last_error = "agentic verification failed";
      return EVE_ERR_VERIFY;
    }
    run->last_error.clear();
    return EVE_OK;
  } catch (const eve::ConfigError& e) {
    run->last_error = e.what();
    return EVE_ERR_CONFIG;
  } catch (const std::exception& e) {
    run->last_error = std::string("stage ") + name + ": " + e.what();
    return EVE_ERR_STAGE;
  }
}

const char* eve_run_last_error(const eve_run* run) {
  return run ? run->last_error.c_str() : "";
}

void eve_run_close(eve_run* run) { delete run; }

const char* eve_version(void) { return "1.0.0"; }

}  // extern "C"
