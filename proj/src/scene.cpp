#include "crowdcast/scene.hpp"

#include <algorithm>

#include "crowdcast/errors.hpp"

namespace crowdcast {

std::string to_string(DensityClass c) {
    switch (c) {
        case DensityClass::lowD: return "lowD";
        case DensityClass::mediumD: return "mediumD";
        case DensityClass::highD: return "highD";
        case DensityClass::veryHD: return "veryHD";
    }
    return "lowD";
}

DensityClass density_class_from_string(const std::string& s) {
    if (s == "lowD") return DensityClass::lowD;
    if (s == "mediumD") return DensityClass::mediumD;
    if (s == "highD") return DensityClass::highD;
    if (s == "veryHD") return DensityClass::veryHD;
    throw ConfigError("unknown density class: " + s);
}

std::array<Position, kObservedSteps> Segment::observed() const {
    std::array<Position, kObservedSteps> out{};
    std::copy_n(positions.begin(), kObservedSteps, out.begin());
    return out;
}

std::array<Position, kFutureSteps> Segment::future() const {
    std::array<Position, kFutureSteps> out{};
    std::copy_n(positions.begin() + kObservedSteps, kFutureSteps, out.begin());
    return out;
}

}  // namespace crowdcast
