#pragma once

#include <string>
#include <vector>

namespace mfc {

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Runs the cross-module invariant checks at desk scale (small particle
// counts, fixed seeds); each entry reports one named property.
std::vector<PropertyResult> property_suite();

}  // namespace mfc
