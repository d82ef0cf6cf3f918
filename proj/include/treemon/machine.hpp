#pragma once

#include <string>
#include <string_view>

#include "treemon/errors.hpp"

namespace treemon {

// Desk-scale machine descriptions. Core-per-node figures follow the cluster
// generations they are named after; node counts default small enough to
// simulate on a laptop.
struct MachinePreset {
    std::string name;
    int cores_per_node = 16;
    int node_count = 64;
};

inline MachinePreset machine_preset(std::string_view name) {
    if (name == "phase1_thin")
        return {"phase1_thin", 16, 64};
    if (name == "phase1_fat")
        return {"phase1_fat", 40, 64};
    if (name == "phase2")
        return {"phase2", 28, 64};
    throw Error("unknown machine preset: " + std::string(name));
}

inline bool is_machine_preset(std::string_view name) {
    return name == "phase1_thin" || name == "phase1_fat" || name == "phase2";
}

} // namespace treemon
