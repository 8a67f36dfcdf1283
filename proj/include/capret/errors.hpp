#pragma once

#include <stdexcept>
#include <string>

namespace capret {

// Coarse error classes; the CLI maps these onto stable exit codes.
enum class ErrorClass { Config = 2, Data = 3, Runtime = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), cls_(cls), kind_(kind) {}

    ErrorClass error_class() const noexcept { return cls_; }
    const std::string& kind() const noexcept { return kind_; }

private:
    ErrorClass cls_;
    std::string kind_;
};

#define CAPRET_DEFINE_ERROR(Name, Class)                                      \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(ErrorClass::Class, #Name, what) {} \
    };

CAPRET_DEFINE_ERROR(FormatError, Data)
CAPRET_DEFINE_ERROR(DataError, Data)
CAPRET_DEFINE_ERROR(ShapeError, Data)
CAPRET_DEFINE_ERROR(MissingCaptionerError, Data)
CAPRET_DEFINE_ERROR(StatsUnavailable, Data)
CAPRET_DEFINE_ERROR(EvalError, Data)
CAPRET_DEFINE_ERROR(EmptyDatasetError, Data)
CAPRET_DEFINE_ERROR(SpecError, Config)
CAPRET_DEFINE_ERROR(ConfigError, Config)
CAPRET_DEFINE_ERROR(IoError, Runtime)
CAPRET_DEFINE_ERROR(EmptyBatchError, Runtime)
CAPRET_DEFINE_ERROR(DivergenceError, Runtime)

#undef CAPRET_DEFINE_ERROR

}  // namespace capret
