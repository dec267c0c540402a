#pragma once

#include <stdexcept>
#include <string>

namespace eisbayes {

// Bad inputs, schema violations, unreadable/missing files. CLI exit 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Diverged optimization, failed sampler diagnostics. CLI exit 3.
struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace eisbayes
