#include "slm/errors.hpp"

namespace slm {

DependencyError::DependencyError(const std::string& stage, const std::string& missing)
    : Error("stage '" + stage + "' requires stage '" + missing + "' to have run first"),
      stage_(stage),
      missing_(missing) {}

}  // namespace slm
