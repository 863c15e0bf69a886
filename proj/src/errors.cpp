#include "ntt/errors.hpp"

#include <iostream>
#include <mutex>

namespace ntt {
namespace {

std::mutex& handler_mutex() {
    static std::mutex m;
    return m;
}

WarningHandler& handler_slot() {
    static WarningHandler h;
    return h;
}

std::string_view kind_name(WarningKind kind) {
    switch (kind) {
    case WarningKind::DegenerateInput: return "degenerate input";
    case WarningKind::ZeroGram: return "zero gram";
    }
    return "warning";
}

}  // namespace

void warn(WarningKind kind, std::string_view message) {
    std::lock_guard lock(handler_mutex());
    if (handler_slot()) {
        handler_slot()(kind, message);
        return;
    }
    std::cerr << "warning (" << kind_name(kind) << "): " << message << '\n';
}

ScopedWarningHandler::ScopedWarningHandler(WarningHandler handler) {
    std::lock_guard lock(handler_mutex());
    previous_ = std::exchange(handler_slot(), std::move(handler));
}

ScopedWarningHandler::~ScopedWarningHandler() {
    std::lock_guard lock(handler_mutex());
    handler_slot() = std::move(previous_);
}

}  // namespace ntt
