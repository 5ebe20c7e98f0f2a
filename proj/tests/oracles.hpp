#pragma once

// Test-only reference implementations, independent of the library code paths
// they check.

#include <algorithm>
#include <vector>

#include "dcl/common.hpp"
#include "dcl/geometry.hpp"

namespace testor {

// Area-sampling IoU on a fixed grid over the unit square.
inline double rasterized_iou(const dcl::Box& a, const dcl::Box& b, int res = 1000) {
    auto inside = [](const dcl::Box& box, double x, double y) {
        double x0 = std::clamp(box.x0(), 0.0, 1.0), x1 = std::clamp(box.x1(), 0.0, 1.0);
        double y0 = std::clamp(box.y0(), 0.0, 1.0), y1 = std::clamp(box.y1(), 0.0, 1.0);
        return x >= x0 && x < x1 && y >= y0 && y < y1;
    };
    long inter = 0, uni = 0;
    for (int iy = 0; iy < res; ++iy) {
        double y = (iy + 0.5) / res;
        for (int ix = 0; ix < res; ++ix) {
            double x = (ix + 0.5) / res;
            bool ia = inside(a, x, y), ib = inside(b, x, y);
            inter += (ia && ib) ? 1 : 0;
            uni += (ia || ib) ? 1 : 0;
        }
    }
    return uni == 0 ? 0.0 : double(inter) / double(uni);
}

// Exhaustive minimum over all one-to-one assignments of min(R,C) rows/cols.
inline double brute_force_assignment(const dcl::Mat& cost) {
    int R = cost.rows, C = cost.cols;
    bool transposed = R > C;
    int n = std::min(R, C), m = std::max(R, C);
    std::vector<int> perm(size_t(m), 0);
    for (int i = 0; i < m; ++i) perm[size_t(i)] = i;
    double best = 1e300;
    // choose which m-side indices the n-side maps to: iterate permutations of
    // the larger side, read the first n
    std::sort(perm.begin(), perm.end());
    do {
        double total = 0.0;
        for (int i = 0; i < n; ++i)
            total += transposed ? cost(perm[size_t(i)], i) : cost(i, perm[size_t(i)]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace testor
