#pragma once

#include <cstdint>

#include "cascadedet/geometry.hpp"

namespace cascadedet {

/// One scored, classified output box.
struct Detection {
    std::int64_t image_id = 0;
    int class_id = 1;
    Box box;
    double score = 0.0;

    bool operator==(const Detection&) const = default;
};

} // namespace cascadedet
