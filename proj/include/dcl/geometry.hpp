#pragma once

#include <algorithm>
#include <cmath>

namespace dcl {

// Axis-aligned box in normalized image coordinates, center + size.
struct Box {
    double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

    double x0() const { return cx - w * 0.5; }
    double x1() const { return cx + w * 0.5; }
    double y0() const { return cy - h * 0.5; }
    double y1() const { return cy + h * 0.5; }
    double area() const { return w * h; }

    bool operator==(const Box& o) const = default;
};

// Corners are clamped to the unit square before measuring, matching how
// boxes are interpreted everywhere else (coordinates live in [0,1]).
double iou(const Box& a, const Box& b);

// Intersection area without unit-square clamping; the simulator's contact
// test wants raw geometry even while an object is partly off screen.
double overlap_area(const Box& a, const Box& b);

// Smallest box covering both inputs.
Box union_box(const Box& a, const Box& b);

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace dcl
