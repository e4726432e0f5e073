#pragma once

#include <stdexcept>
#include <string>

namespace nodecast {

// One exception type per failure family. Everything derives from Error so the
// CLI can catch a single base and exit 1 with the message.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };     // bad config keys/values, invalid fractions
struct DataError : Error { using Error::Error; };       // malformed input, imputation anchors, calendar problems
struct ShapeError : Error { using Error::Error; };      // tensor shape mismatches
struct GraphError : Error { using Error::Error; };      // edge matrix construction/validation
struct NumericError : Error { using Error::Error; };    // non-finite values, divergent training
struct MetricError : Error { using Error::Error; };     // degenerate metric/statistic inputs
struct BacktestError : Error { using Error::Error; };   // portfolio construction/accounting
struct PersistError : Error { using Error::Error; };    // checkpoint/CSV round-trip failures
struct TrainError : Error { using Error::Error; };      // staged-training contract violations
struct BaselineError : Error { using Error::Error; };   // reference forecaster fitting failures

}  // namespace nodecast
