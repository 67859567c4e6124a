#include "jumpdiff.h"

#include "run/config.hpp"
#include "run/runner.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
jd_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return JD_OK;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return JD_ERR_CONFIG;
    } catch (const std::logic_error& e) {
        g_last_error = e.what();
        return JD_ERR_CONFIG;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return JD_ERR_NUMERIC;
    }
}

}  // namespace

extern "C" {

const char* jd_version(void) { return "1.0.0"; }

const char* jd_last_error(void) { return g_last_error.c_str(); }

jd_status jd_config_normalize(const char* config_json, char** normalized_json) {
    if (!config_json || !normalized_json) {
        g_last_error = "null argument";
        return JD_ERR_CONFIG;
    }
    return guarded([&]() {
        const auto cfg = jd::run::parse_config(config_json);
        *normalized_json = dup_string(jd::run::serialize_config(cfg));
    });
}

jd_status jd_config_hash(const char* config_json, char** hash_hex) {
    if (!config_json || !hash_hex) {
        g_last_error = "null argument";
        return JD_ERR_CONFIG;
    }
    return guarded([&]() {
        const auto cfg = jd::run::parse_config(config_json);
        *hash_hex = dup_string(jd::run::config_hash(cfg));
    });
}

jd_status jd_benchmark_json(const char* config_json, char** benchmark_json) {
    if (!config_json || !benchmark_json) {
        g_last_error = "null argument";
        return JD_ERR_CONFIG;
    }
    return guarded([&]() {
        const auto cfg = jd::run::parse_config(config_json);
        *benchmark_json = dup_string(jd::run::benchmark_to_json(cfg));
    });
}

jd_status jd_run(const char* command, const char* config_json, long long seed_override,
                 const char* out_dir) {
    if (!command || !config_json) {
        g_last_error = "null argument";
        return JD_ERR_CONFIG;
    }
    return guarded([&]() {
        jd::run::run_command(command, config_json, seed_override, out_dir ? out_dir : "");
    });
}

void jd_string_free(char* s) { std::free(s); }

}  // extern "C"
