#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcl/common.hpp"

namespace dcl::ad {

// Trainable tensor with a gradient accumulator. Matrices are row-major
// (rows x cols); vectors use cols == 1.
struct Param {
    std::string name;
    int rows = 0, cols = 1;
    std::vector<double> w;
    std::vector<double> g;

    Param() = default;
    Param(std::string n, int r, int c) : name(std::move(n)), rows(r), cols(c) {
        w.assign(size_t(r) * size_t(c), 0.0);
        g.assign(w.size(), 0.0);
    }
    size_t size() const { return w.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

// Handle to a tape value: offset into the value arena plus its width.
struct Var {
    int off = -1;
    int dim = 0;
    bool valid() const { return off >= 0; }
};

// Eagerly evaluated reverse-mode tape over vector-valued nodes. Forward
// values are computed as ops are recorded; backward replays the op list in
// reverse, accumulating into Param::g. One tape per training item; reset()
// keeps the arena capacity.
class Tape {
public:
    Var input(std::span<const double> x);           // constant leaf
    Var scalar(double v);                           // 1-wide constant leaf
    Var param(Param& p);                            // leaf view of a parameter vector

    // y = W x (+ bias). The _const variant takes a plain buffer as input (no
    // gradient flows into it); the input is copied for the backward pass.
    Var affine_const(Param& W, Param* bias, std::span<const double> x);
    // y = [W1|W2|...] * concat(xs) (+ bias); blocks follow xs order.
    Var affine(Param& W, Param* bias, std::span<const Var> xs);

    Var relu(Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);              // elementwise
    Var scale(Var x, double c);
    Var offset(Var x, double c);
    Var sum(Var x);                     // -> scalar
    Var dot(Var a, Var b);              // -> scalar
    Var smul(Var x, Var s);             // vector times scalar var
    Var sigmoid(Var x);
    Var log(Var x);                     // scalar, x > 0
    Var div(Var a, Var b);              // scalars
    Var sqrt(Var x);                    // scalar
    Var vmin(Var a, Var b);             // scalars; ties resolve to a
    Var vmax(Var a, Var b);             // scalars; ties resolve to a

    double value(Var v) const { return val_[size_t(v.off)]; }
    std::span<const double> values(Var v) const {
        return {val_.data() + v.off, size_t(v.dim)};
    }

    // d(root)/d(params) accumulated into Param::g; root must be scalar.
    void backward(Var root);

    void reset();
    size_t op_count() const { return ops_.size(); }

private:
    enum class OpKind : uint8_t {
        Input, ParamLeaf, AffineConst, Affine, Relu, Add, Sub, Mul, Scale, Offset,
        Sum, Dot, Smul, Sigmoid, Log, Div, Sqrt, Min, Max,
    };
    struct Op {
        OpKind kind;
        int out = -1, n = 0;        // output offset / width
        int a = -1, b = -1;         // operand offsets
        int na = 0, nb = 0;
        Param* W = nullptr;
        Param* bias = nullptr;
        double c = 0.0;
        int aux = -1;               // offset into cdata_ or xs_ tables
        int aux_n = 0;
    };

    Var alloc(int dim);
    std::vector<double> val_, adj_;
    std::vector<double> cdata_;     // copied constant inputs for AffineConst
    std::vector<Var> xs_;           // operand lists for Affine
    std::vector<Op> ops_;
};

struct SgdMomentum {
    double lr = 1e-2;
    double momentum = 0.9;
    std::unordered_map<Param*, std::vector<double>> velocity;
    void step(const std::vector<Param*>& params);
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::unordered_map<Param*, std::vector<double>> m, v;
    void step(const std::vector<Param*>& params);
};

void zero_grads(const std::vector<Param*>& params);
// Scales gradients so their global L2 norm is at most max_norm.
void clip_grad_norm(const std::vector<Param*>& params, double max_norm);

}  // namespace dcl::ad
