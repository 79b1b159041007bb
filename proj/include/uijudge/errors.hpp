#pragma once
#include <stdexcept>
#include <string>

namespace uijudge {

// Root of all library errors. Callers that don't care about the exact
// failure mode can catch this one type.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace uijudge
