#include "retinavit/mat.hpp"

#include <cmath>

namespace retinavit {

bool all_finite(const Mat& m) {
    for (double v : m.a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace retinavit
