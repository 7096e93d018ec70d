#include "nclust/log.hpp"

#include <iostream>
#include <mutex>
#include <string>

namespace nclust {

namespace {

std::mutex sink_mutex;

LogSink& sink() {
    static LogSink s = [](std::string_view m) { std::cerr << "warning: " << m << '\n'; };
    return s;
}

} // namespace

LogSink set_warning_sink(LogSink s) {
    std::lock_guard lock(sink_mutex);
    std::swap(sink(), s);
    return s;
}

void log_warning(std::string_view message) {
    std::lock_guard lock(sink_mutex);
    if (sink()) sink()(message);
}

} // namespace nclust
