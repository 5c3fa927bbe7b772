#pragma once

#include <stdexcept>
#include <string>

namespace gpenkf {

/// Base class for all errors raised by the library. `kind()` returns the
/// stable name used in CLI diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define GPENKF_DEFINE_ERROR(Name)                                      \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& what) : Error(#Name, what) {} \
    }

GPENKF_DEFINE_ERROR(InvalidArgument);
GPENKF_DEFINE_ERROR(DimensionMismatch);
GPENKF_DEFINE_ERROR(SingularKernel);
GPENKF_DEFINE_ERROR(SingularInnovation);
GPENKF_DEFINE_ERROR(NonFiniteMember);
GPENKF_DEFINE_ERROR(UnstableStep);
GPENKF_DEFINE_ERROR(Degenerate);
GPENKF_DEFINE_ERROR(InsufficientSurvivors);
GPENKF_DEFINE_ERROR(FormatError);

#undef GPENKF_DEFINE_ERROR

}  // namespace gpenkf
