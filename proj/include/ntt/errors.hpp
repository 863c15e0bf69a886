#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ntt {

/// Base of every error raised by the library. Carries an optional TT stage
/// index that the driver attaches when a stage fails.
class Error : public std::runtime_error {
public:
    explicit Error(std::string message)
        : std::runtime_error(message), message_(std::move(message)), full_(message_) {}

    const char* what() const noexcept override { return full_.c_str(); }

    const std::string& message() const noexcept { return message_; }
    std::optional<int> stage() const noexcept { return stage_; }

    void set_stage(int stage) {
        stage_ = stage;
        full_ = "stage " + std::to_string(stage) + ": " + message_;
    }

private:
    std::string message_;
    std::string full_;
    std::optional<int> stage_;
};

#define NTT_DEFINE_ERROR(Name)                                                   \
    class Name : public Error {                                                  \
    public:                                                                      \
        explicit Name(std::string message) : Error(std::move(message)) {}        \
    }

NTT_DEFINE_ERROR(DimensionError);
NTT_DEFINE_ERROR(IndexError);
NTT_DEFINE_ERROR(RankError);
NTT_DEFINE_ERROR(DegenerateInputError);
NTT_DEFINE_ERROR(CollectiveContractError);
NTT_DEFINE_ERROR(StoreError);
NTT_DEFINE_ERROR(NumericalError);
NTT_DEFINE_ERROR(NonnegativityError);

#undef NTT_DEFINE_ERROR

/// Thrown on every surviving worker of an SPMD group once another worker has
/// failed. Never escapes run_spmd.
class SpmdAborted : public std::runtime_error {
public:
    SpmdAborted() : std::runtime_error("spmd group aborted") {}
};

enum class WarningKind { DegenerateInput, ZeroGram };

using WarningHandler = std::function<void(WarningKind, std::string_view)>;

/// Routes a non-fatal diagnostic to the installed handler (stderr by default).
void warn(WarningKind kind, std::string_view message);

/// Installs a handler for the lifetime of this object. Handlers may be invoked
/// concurrently from SPMD workers.
class ScopedWarningHandler {
public:
    explicit ScopedWarningHandler(WarningHandler handler);
    ~ScopedWarningHandler();
    ScopedWarningHandler(const ScopedWarningHandler&) = delete;
    ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

private:
    WarningHandler previous_;
};

}  // namespace ntt
