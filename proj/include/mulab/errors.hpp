#pragma once

#include <stdexcept>
#include <string>

namespace mulab {

/// Base of every error raised by the library. `kind()` is a stable identifier
/// used by the CLI and in reports.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define MULAB_DEFINE_ERROR(Name)                                               \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name, what) {}         \
    }

MULAB_DEFINE_ERROR(NonPositiveDelay);
MULAB_DEFINE_ERROR(DegenerateGrid);
MULAB_DEFINE_ERROR(OutOfDomain);
MULAB_DEFINE_ERROR(StepMisaligned);
MULAB_DEFINE_ERROR(NonFiniteState);
MULAB_DEFINE_ERROR(TimeOrder);
MULAB_DEFINE_ERROR(SingularUnstableBasis);
MULAB_DEFINE_ERROR(EmptyWindow);
MULAB_DEFINE_ERROR(XiOutOfWindow);
MULAB_DEFINE_ERROR(TruncationUnreachable);
MULAB_DEFINE_ERROR(NotContracting);
MULAB_DEFINE_ERROR(MissingSeries);
MULAB_DEFINE_ERROR(InvalidArgument);

#undef MULAB_DEFINE_ERROR

/// Scenario and command-line configuration problems. `field` names the
/// offending JSON path (or line, for parse errors).
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("ConfigError", field.empty() ? what : field + ": " + what),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace mulab
