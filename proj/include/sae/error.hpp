#ifndef SAE_ERROR_HPP
#define SAE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace sae {

/// Bad or inconsistent input data. Maps to CLI exit code 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Variance-component search did not converge. Maps to CLI exit code 2.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double last_iterate, double gradient_norm)
        : std::runtime_error(what + " (last iterate " + std::to_string(last_iterate) +
                             ", |gradient| " + std::to_string(gradient_norm) + ")"),
          last_iterate_{last_iterate}, gradient_norm_{gradient_norm} {}

    double last_iterate() const noexcept { return last_iterate_; }
    double gradient_norm() const noexcept { return gradient_norm_; }

private:
    double last_iterate_;
    double gradient_norm_;
};

/// Pipeline failure tagged with the stage that raised it.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& message, int exit_code)
        : std::runtime_error("[" + stage + "] " + message), stage_{std::move(stage)},
          exit_code_{exit_code} {}

    const std::string& stage() const noexcept { return stage_; }
    int exit_code() const noexcept { return exit_code_; }

private:
    std::string stage_;
    int exit_code_;
};

} // namespace sae

#endif // SAE_ERROR_HPP
