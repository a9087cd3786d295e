#pragma once

#include <stdexcept>
#include <string>

namespace mproj {

/// Error taxonomy shared by all modules. The CLI maps kinds to exit codes:
/// usage -> 2, config/format -> 3, everything else -> 1.
enum class error_kind {
    domain,    // argument outside the mathematical domain of an operation
    range,     // value outside a tabulated / supported range
    config,    // configuration schema violation
    format,    // corrupt or truncated file
    capacity,  // explicit memory/size bound exceeded
    usage,     // caller misuse (shape mismatch, bad subcommand, ...)
    io,        // filesystem failure
    stage,     // pipeline stage failure (divergence, dependency missing, ...)
};

class error : public std::runtime_error {
  public:
    error(error_kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    error_kind kind() const { return kind_; }

  private:
    error_kind kind_;
};

struct domain_error : error {
    explicit domain_error(const std::string& m) : error(error_kind::domain, m) {}
};
struct range_error : error {
    explicit range_error(const std::string& m) : error(error_kind::range, m) {}
};
struct config_error : error {
    explicit config_error(const std::string& m) : error(error_kind::config, m) {}
};
struct format_error : error {
    explicit format_error(const std::string& m) : error(error_kind::format, m) {}
};
struct capacity_error : error {
    explicit capacity_error(const std::string& m) : error(error_kind::capacity, m) {}
};
struct usage_error : error {
    explicit usage_error(const std::string& m) : error(error_kind::usage, m) {}
};
struct io_error : error {
    explicit io_error(const std::string& m) : error(error_kind::io, m) {}
};
struct stage_error : error {
    explicit stage_error(const std::string& m) : error(error_kind::stage, m) {}
};

}  // namespace mproj
