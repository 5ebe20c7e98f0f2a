#include "dcl/geometry.hpp"

namespace dcl {

namespace {
struct Rect {
    double x0, y0, x1, y1;
};

Rect clamped(const Box& b) {
    return {clamp01(b.x0()), clamp01(b.y0()), clamp01(b.x1()), clamp01(b.y1())};
}

double rect_area(const Rect& r) {
    return std::max(0.0, r.x1 - r.x0) * std::max(0.0, r.y1 - r.y0);
}
}  // namespace

double iou(const Box& a, const Box& b) {
    Rect ra = clamped(a), rb = clamped(b);
    double ix = std::max(0.0, std::min(ra.x1, rb.x1) - std::max(ra.x0, rb.x0));
    double iy = std::max(0.0, std::min(ra.y1, rb.y1) - std::max(ra.y0, rb.y0));
    double inter = ix * iy;
    double uni = rect_area(ra) + rect_area(rb) - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

double overlap_area(const Box& a, const Box& b) {
    double ix = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
    double iy = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
    return ix * iy;
}

Box union_box(const Box& a, const Box& b) {
    double x0 = std::min(a.x0(), b.x0());
    double y0 = std::min(a.y0(), b.y0());
    double x1 = std::max(a.x1(), b.x1());
    double y1 = std::max(a.y1(), b.y1());
    return Box{(x0 + x1) * 0.5, (y0 + y1) * 0.5, x1 - x0, y1 - y0};
}

}  // namespace dcl
