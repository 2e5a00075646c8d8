#pragma once

#include <string>

#include "cdqr/solver.hpp"

namespace cdqr {

/// Versioned structured-text (JSON) serialization of a fitted model.
/// Doubles round-trip exactly, so a loaded model reproduces predictions
/// bit for bit.
void save_model(const FittedCdfModel& model, const std::string& path);
FittedCdfModel load_model(const std::string& path);

}  // namespace cdqr
