#pragma once

#include <stdexcept>
#include <string>

namespace lecomh {

// Invalid configuration or input data. CLI exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; message carries the offending line number. Exit code 2.
struct parse_error : config_error {
    using config_error::config_error;
};

// Non-finite values reached a numeric kernel. Exit code 3.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failure, message carries the path. Exit code 4.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor dimensions do not line up.
struct shape_error : std::logic_error {
    using std::logic_error::logic_error;
};

// Operation invoked before its prerequisite (e.g. backward without forward).
struct state_error : std::logic_error {
    using std::logic_error::logic_error;
};

// Caller broke a documented precondition.
struct contract_error : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace lecomh
