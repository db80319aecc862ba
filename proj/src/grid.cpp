#include "strokeval/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "strokeval/error.hpp"

namespace strokeval {

std::string Grid::describe() const {
    std::ostringstream out;
    out << dims[0] << "x" << dims[1] << "x" << dims[2] << " @ " << spacing_mm[0] << "x" << spacing_mm[1] << "x"
        << spacing_mm[2] << " mm";
    return out.str();
}

bool same_grid(const Grid& a, const Grid& b) noexcept {
    if (a.dims != b.dims) return false;
    for (int i = 0; i < 3; ++i) {
        const double scale = std::max(std::abs(a.spacing_mm[i]), std::abs(b.spacing_mm[i]));
        if (std::abs(a.spacing_mm[i] - b.spacing_mm[i]) > 1e-6 * scale) return false;
    }
    return true;
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (!same_grid(a, b)) {
        throw Error(ErrorCode::GridMismatch, std::string(what) + ": " + a.describe() + " vs " + b.describe());
    }
}

}  // namespace strokeval
