#pragma once

#include <stdexcept>
#include <string>

namespace lgs {

/// Invalid run configuration, CLI arguments, or reference data.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Corrupt or malformed avatar asset file.
struct AssetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Optimization left the sane region (centers escaped the body bounds).
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lgs
