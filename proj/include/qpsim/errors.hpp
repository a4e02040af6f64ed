#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qpsim {

// Base for every error raised by the library. category() is the stable,
// machine-readable tag the CLI prints before the message.
class Error : public std::runtime_error {
public:
    Error(std::string_view category, const std::string& what)
        : std::runtime_error(what), category_(category) {}
    std::string_view category() const noexcept { return category_; }

private:
    std::string_view category_;
};

#define QPSIM_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(#Name, what) {}        \
    };

QPSIM_DEFINE_ERROR(RegimeError)
QPSIM_DEFINE_ERROR(DomainError)
QPSIM_DEFINE_ERROR(ConstraintError)
QPSIM_DEFINE_ERROR(IntegrationError)
QPSIM_DEFINE_ERROR(ConfigError)
QPSIM_DEFINE_ERROR(FormatError)
QPSIM_DEFINE_ERROR(RangeError)
QPSIM_DEFINE_ERROR(MissingBackground)
QPSIM_DEFINE_ERROR(InsufficientPeaks)
QPSIM_DEFINE_ERROR(ConvergenceError)
QPSIM_DEFINE_ERROR(DegenerateData)
QPSIM_DEFINE_ERROR(WindowError)
QPSIM_DEFINE_ERROR(IOError)

#undef QPSIM_DEFINE_ERROR

} // namespace qpsim
