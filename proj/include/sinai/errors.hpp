#pragma once

#include <stdexcept>
#include <string>

namespace sinai {

// Exit-code family used by the command line front end.
enum class ErrorFamily { validation = 2, solver = 3, budget = 4 };

class Error : public std::runtime_error {
public:
    Error(const std::string& what, ErrorFamily family)
        : std::runtime_error(what), family_(family) {}
    ErrorFamily family() const { return family_; }

private:
    ErrorFamily family_;
};

#define SINAI_ERROR(Name, Family)                                     \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& what)                         \
            : Error(std::string(#Name ": ") + what, ErrorFamily::Family) {} \
    };

SINAI_ERROR(ConvexityError, validation)
SINAI_ERROR(InvalidTable, validation)
SINAI_ERROR(HorizonViolation, validation)
SINAI_ERROR(GeometryError, validation)
SINAI_ERROR(DegenerateSegment, validation)
SINAI_ERROR(InvalidWord, validation)
SINAI_ERROR(InfeasiblePoint, validation)
SINAI_ERROR(InfeasibleWord, validation)
SINAI_ERROR(PerturbationTooLarge, validation)
SINAI_ERROR(DomainError, validation)
SINAI_ERROR(NotInA0, validation)
SINAI_ERROR(IncomparableTables, validation)
SINAI_ERROR(SolverFailure, solver)
SINAI_ERROR(HessianSingular, solver)
SINAI_ERROR(IntegrationFailure, solver)
SINAI_ERROR(ClassEscape, solver)
SINAI_ERROR(InsufficientSamples, solver)
SINAI_ERROR(BudgetExceeded, budget)

#undef SINAI_ERROR

class ParseError : public Error {
public:
    ParseError(const std::string& what, int line)
        : Error("ParseError: line " + std::to_string(line) + ": " + what, ErrorFamily::validation),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

}  // namespace sinai
