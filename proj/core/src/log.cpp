#include "battbee/log.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace battbee::log {

namespace {

Level parse_env() {
    const char* v = std::getenv("BATTBEE_LOG");
    if (!v) return Level::warn;
    if (std::strcmp(v, "error") == 0) return Level::error;
    if (std::strcmp(v, "warn") == 0) return Level::warn;
    if (std::strcmp(v, "info") == 0) return Level::info;
    if (std::strcmp(v, "debug") == 0) return Level::debug;
    return Level::warn;
}

std::atomic<int>& threshold_storage() {
    static std::atomic<int> lv{static_cast<int>(parse_env())};
    return lv;
}

const char* tag(Level lv) {
    switch (lv) {
        case Level::error: return "error";
        case Level::warn: return "warn";
        case Level::info: return "info";
        default: return "debug";
    }
}

} // namespace

Level threshold() { return static_cast<Level>(threshold_storage().load()); }

void set_threshold(Level lv) { threshold_storage().store(static_cast<int>(lv)); }

void write(Level lv, const std::string& msg) {
    if (static_cast<int>(lv) > threshold_storage().load()) return;
    std::fprintf(stderr, "[battbee %s] %s\n", tag(lv), msg.c_str());
}

} // namespace battbee::log
