#pragma once

#include <string>

#include "fairpar/nn.hpp"

namespace fairpar {

// JSON checkpoints, version "fairpar-ckpt-1": shape metadata plus row-major
// weight arrays that round-trip doubles exactly.
void save_adapter(const AdapterParams& g, const std::string& path);
AdapterParams load_adapter(const std::string& path);

void save_classifier(const ClassifierParams& d, const std::string& path);
ClassifierParams load_classifier(const std::string& path);

}  // namespace fairpar
