#include "dcl/tape.hpp"

#include <cmath>

namespace dcl::ad {

Var Tape::alloc(int dim) {
    Var v{int(val_.size()), dim};
    val_.resize(val_.size() + size_t(dim), 0.0);
    return v;
}

Var Tape::input(std::span<const double> x) {
    Var v = alloc(int(x.size()));
    std::copy(x.begin(), x.end(), val_.begin() + v.off);
    ops_.push_back({OpKind::Input, v.off, v.dim});
    return v;
}

Var Tape::scalar(double s) {
    double buf[1] = {s};
    return input(std::span<const double>(buf, 1));
}

Var Tape::param(Param& p) {
    Var v = alloc(int(p.size()));
    std::copy(p.w.begin(), p.w.end(), val_.begin() + v.off);
    Op op{OpKind::ParamLeaf, v.off, v.dim};
    op.W = &p;
    ops_.push_back(op);
    return v;
}

Var Tape::affine_const(Param& W, Param* bias, std::span<const double> x) {
    if (int(x.size()) != W.cols) throw DataError("affine_const: width mismatch");
    Var y = alloc(W.rows);
    int aux = int(cdata_.size());
    cdata_.insert(cdata_.end(), x.begin(), x.end());
    const double* xv = cdata_.data() + aux;
    for (int r = 0; r < W.rows; ++r) {
        const double* wr = W.w.data() + size_t(r) * size_t(W.cols);
        double s = bias ? bias->w[size_t(r)] : 0.0;
        for (int c = 0; c < W.cols; ++c) s += wr[c] * xv[c];
        val_[size_t(y.off + r)] = s;
    }
    Op op{OpKind::AffineConst, y.off, y.dim};
    op.W = &W;
    op.bias = bias;
    op.aux = aux;
    op.aux_n = int(x.size());
    ops_.push_back(op);
    return y;
}

Var Tape::affine(Param& W, Param* bias, std::span<const Var> xs) {
    int total = 0;
    for (const Var& x : xs) total += x.dim;
    if (total != W.cols) throw DataError("affine: width mismatch");
    Var y = alloc(W.rows);
    int aux = int(xs_.size());
    for (const Var& x : xs) xs_.push_back(x);
    for (int r = 0; r < W.rows; ++r) {
        const double* wr = W.w.data() + size_t(r) * size_t(W.cols);
        double s = bias ? bias->w[size_t(r)] : 0.0;
        int col = 0;
        for (const Var& x : xs) {
            const double* xv = val_.data() + x.off;
            for (int c = 0; c < x.dim; ++c) s += wr[col + c] * xv[c];
            col += x.dim;
        }
        val_[size_t(y.off + r)] = s;
    }
    Op op{OpKind::Affine, y.off, y.dim};
    op.W = &W;
    op.bias = bias;
    op.aux = aux;
    op.aux_n = int(xs.size());
    ops_.push_back(op);
    return y;
}

Var Tape::relu(Var x) {
    Var y = alloc(x.dim);
    for (int i = 0; i < x.dim; ++i) {
        double v = val_[size_t(x.off + i)];
        val_[size_t(y.off + i)] = v > 0.0 ? v : 0.0;
    }
    ops_.push_back({OpKind::Relu, y.off, y.dim, x.off, -1, x.dim});
    return y;
}

Var Tape::add(Var a, Var b) {
    if (a.dim != b.dim) throw DataError("add: width mismatch");
    Var y = alloc(a.dim);
    for (int i = 0; i < a.dim; ++i)
        val_[size_t(y.off + i)] = val_[size_t(a.off + i)] + val_[size_t(b.off + i)];
    ops_.push_back({OpKind::Add, y.off, y.dim, a.off, b.off, a.dim, b.dim});
    return y;
}

Var Tape::sub(Var a, Var b) {
    if (a.dim != b.dim) throw DataError("sub: width mismatch");
    Var y = alloc(a.dim);
    for (int i = 0; i < a.dim; ++i)
        val_[size_t(y.off + i)] = val_[size_t(a.off + i)] - val_[size_t(b.off + i)];
    ops_.push_back({OpKind::Sub, y.off, y.dim, a.off, b.off, a.dim, b.dim});
    return y;
}

Var Tape::mul(Var a, Var b) {
    if (a.dim != b.dim) throw DataError("mul: width mismatch");
    Var y = alloc(a.dim);
    for (int i = 0; i < a.dim; ++i)
        val_[size_t(y.off + i)] = val_[size_t(a.off + i)] * val_[size_t(b.off + i)];
    ops_.push_back({OpKind::Mul, y.off, y.dim, a.off, b.off, a.dim, b.dim});
    return y;
}

Var Tape::scale(Var x, double c) {
    Var y = alloc(x.dim);
    for (int i = 0; i < x.dim; ++i) val_[size_t(y.off + i)] = val_[size_t(x.off + i)] * c;
    Op op{OpKind::Scale, y.off, y.dim, x.off, -1, x.dim};
    op.c = c;
    ops_.push_back(op);
    return y;
}

Var Tape::offset(Var x, double c) {
    Var y = alloc(x.dim);
    for (int i = 0; i < x.dim; ++i) val_[size_t(y.off + i)] = val_[size_t(x.off + i)] + c;
    Op op{OpKind::Offset, y.off, y.dim, x.off, -1, x.dim};
    op.c = c;
    ops_.push_back(op);
    return y;
}

Var Tape::sum(Var x) {
    Var y = alloc(1);
    double s = 0.0;
    for (int i = 0; i < x.dim; ++i) s += val_[size_t(x.off + i)];
    val_[size_t(y.off)] = s;
    ops_.push_back({OpKind::Sum, y.off, 1, x.off, -1, x.dim});
    return y;
}

Var Tape::dot(Var a, Var b) {
    if (a.dim != b.dim) throw DataError("dot: width mismatch");
    Var y = alloc(1);
    double s = 0.0;
    for (int i = 0; i < a.dim; ++i)
        s += val_[size_t(a.off + i)] * val_[size_t(b.off + i)];
    val_[size_t(y.off)] = s;
    ops_.push_back({OpKind::Dot, y.off, 1, a.off, b.off, a.dim, b.dim});
    return y;
}

Var Tape::smul(Var x, Var s) {
    if (s.dim != 1) throw DataError("smul: scalar expected");
    Var y = alloc(x.dim);
    double sv = val_[size_t(s.off)];
    for (int i = 0; i < x.dim; ++i) val_[size_t(y.off + i)] = val_[size_t(x.off + i)] * sv;
    ops_.push_back({OpKind::Smul, y.off, y.dim, x.off, s.off, x.dim, 1});
    return y;
}

Var Tape::sigmoid(Var x) {
    Var y = alloc(x.dim);
    for (int i = 0; i < x.dim; ++i) {
        double v = val_[size_t(x.off + i)];
        val_[size_t(y.off + i)] = 1.0 / (1.0 + std::exp(-v));
    }
    ops_.push_back({OpKind::Sigmoid, y.off, y.dim, x.off, -1, x.dim});
    return y;
}

Var Tape::log(Var x) {
    Var y = alloc(x.dim);
    for (int i = 0; i < x.dim; ++i) {
        double v = val_[size_t(x.off + i)];
        if (v <= 0.0) throw DataError("log: non-positive argument");
        val_[size_t(y.off + i)] = std::log(v);
    }
    ops_.push_back({OpKind::Log, y.off, y.dim, x.off, -1, x.dim});
    return y;
}

Var Tape::div(Var a, Var b) {
    if (a.dim != 1 || b.dim != 1) throw DataError("div: scalars expected");
    Var y = alloc(1);
    val_[size_t(y.off)] = val_[size_t(a.off)] / val_[size_t(b.off)];
    ops_.push_back({OpKind::Div, y.off, 1, a.off, b.off, 1, 1});
    return y;
}

Var Tape::sqrt(Var x) {
    if (x.dim != 1) throw DataError("sqrt: scalar expected");
    Var y = alloc(1);
    val_[size_t(y.off)] = std::sqrt(val_[size_t(x.off)]);
    ops_.push_back({OpKind::Sqrt, y.off, 1, x.off, -1, 1, 0});
    return y;
}

Var Tape::vmin(Var a, Var b) {
    if (a.dim != 1 || b.dim != 1) throw DataError("vmin: scalars expected");
    Var y = alloc(1);
    val_[size_t(y.off)] = std::min(val_[size_t(a.off)], val_[size_t(b.off)]);
    ops_.push_back({OpKind::Min, y.off, 1, a.off, b.off, 1, 1});
    return y;
}

Var Tape::vmax(Var a, Var b) {
    if (a.dim != 1 || b.dim != 1) throw DataError("vmax: scalars expected");
    Var y = alloc(1);
    val_[size_t(y.off)] = std::max(val_[size_t(a.off)], val_[size_t(b.off)]);
    ops_.push_back({OpKind::Max, y.off, 1, a.off, b.off, 1, 1});
    return y;
}

void Tape::backward(Var root) {
    if (root.dim != 1) throw DataError("backward: scalar root expected");
    adj_.assign(val_.size(), 0.0);
    adj_[size_t(root.off)] = 1.0;
    for (size_t oi = ops_.size(); oi > 0; --oi) {
        const Op& op = ops_[oi - 1];
        const double* oadj = adj_.data() + op.out;
        switch (op.kind) {
            case OpKind::Input:
                break;
            case OpKind::ParamLeaf: {
                for (int i = 0; i < op.n; ++i) op.W->g[size_t(i)] += oadj[i];
                break;
            }
            case OpKind::AffineConst: {
                const double* xv = cdata_.data() + op.aux;
                for (int r = 0; r < op.n; ++r) {
                    double a = oadj[r];
                    if (a == 0.0) continue;
                    double* gw = op.W->g.data() + size_t(r) * size_t(op.W->cols);
                    for (int c = 0; c < op.aux_n; ++c) gw[c] += a * xv[c];
                    if (op.bias) op.bias->g[size_t(r)] += a;
                }
                break;
            }
            case OpKind::Affine: {
                for (int r = 0; r < op.n; ++r) {
                    double a = oadj[r];
                    if (op.bias && a != 0.0) op.bias->g[size_t(r)] += a;
                    if (a == 0.0) continue;
                    double* gw = op.W->g.data() + size_t(r) * size_t(op.W->cols);
                    const double* wr = op.W->w.data() + size_t(r) * size_t(op.W->cols);
                    int col = 0;
                    for (int xi = 0; xi < op.aux_n; ++xi) {
                        const Var& x = xs_[size_t(op.aux + xi)];
                        const double* xv = val_.data() + x.off;
                        double* xadj = adj_.data() + x.off;
                        for (int c = 0; c < x.dim; ++c) {
                            gw[col + c] += a * xv[c];
                            xadj[c] += a * wr[col + c];
                        }
                        col += x.dim;
                    }
                }
                break;
            }
            case OpKind::Relu:
                for (int i = 0; i < op.n; ++i)
                    if (val_[size_t(op.a + i)] > 0.0) adj_[size_t(op.a + i)] += oadj[i];
                break;
            case OpKind::Add:
                for (int i = 0; i < op.n; ++i) {
                    adj_[size_t(op.a + i)] += oadj[i];
                    adj_[size_t(op.b + i)] += oadj[i];
                }
                break;
            case OpKind::Sub:
                for (int i = 0; i < op.n; ++i) {
                    adj_[size_t(op.a + i)] += oadj[i];
                    adj_[size_t(op.b + i)] -= oadj[i];
                }
                break;
            case OpKind::Mul:
                for (int i = 0; i < op.n; ++i) {
                    adj_[size_t(op.a + i)] += oadj[i] * val_[size_t(op.b + i)];
                    adj_[size_t(op.b + i)] += oadj[i] * val_[size_t(op.a + i)];
                }
                break;
            case OpKind::Scale:
                for (int i = 0; i < op.n; ++i) adj_[size_t(op.a + i)] += oadj[i] * op.c;
                break;
            case OpKind::Offset:
                for (int i = 0; i < op.n; ++i) adj_[size_t(op.a + i)] += oadj[i];
                break;
            case OpKind::Sum:
                for (int i = 0; i < op.na; ++i) adj_[size_t(op.a + i)] += oadj[0];
                break;
            case OpKind::Dot:
                for (int i = 0; i < op.na; ++i) {
                    adj_[size_t(op.a + i)] += oadj[0] * val_[size_t(op.b + i)];
                    adj_[size_t(op.b + i)] += oadj[0] * val_[size_t(op.a + i)];
                }
                break;
            case OpKind::Smul: {
                double sv = val_[size_t(op.b)];
                double sadj = 0.0;
                for (int i = 0; i < op.n; ++i) {
                    adj_[size_t(op.a + i)] += oadj[i] * sv;
                    sadj += oadj[i] * val_[size_t(op.a + i)];
                }
                adj_[size_t(op.b)] += sadj;
                break;
            }
            case OpKind::Sigmoid:
                for (int i = 0; i < op.n; ++i) {
                    double y = val_[size_t(op.out + i)];
                    adj_[size_t(op.a + i)] += oadj[i] * y * (1.0 - y);
                }
                break;
            case OpKind::Log:
                for (int i = 0; i < op.n; ++i)
                    adj_[size_t(op.a + i)] += oadj[i] / val_[size_t(op.a + i)];
                break;
            case OpKind::Div: {
                double bv = val_[size_t(op.b)];
                adj_[size_t(op.a)] += oadj[0] / bv;
                adj_[size_t(op.b)] -= oadj[0] * val_[size_t(op.a)] / (bv * bv);
                break;
            }
            case OpKind::Sqrt: {
                double y = val_[size_t(op.out)];
                if (y > 0.0) adj_[size_t(op.a)] += oadj[0] * 0.5 / y;
                break;
            }
            case OpKind::Min:
                if (val_[size_t(op.a)] <= val_[size_t(op.b)])
                    adj_[size_t(op.a)] += oadj[0];
                else
                    adj_[size_t(op.b)] += oadj[0];
                break;
            case OpKind::Max:
                if (val_[size_t(op.a)] >= val_[size_t(op.b)])
                    adj_[size_t(op.a)] += oadj[0];
                else
                    adj_[size_t(op.b)] += oadj[0];
                break;
        }
    }
}

void Tape::reset() {
    val_.clear();
    adj_.clear();
    cdata_.clear();
    xs_.clear();
    ops_.clear();
}

void SgdMomentum::step(const std::vector<Param*>& params) {
    for (Param* p : params) {
        auto& vel = velocity[p];
        if (vel.size() != p->size()) vel.assign(p->size(), 0.0);
        for (size_t i = 0; i < p->size(); ++i) {
            vel[i] = momentum * vel[i] + p->g[i];
            p->w[i] -= lr * vel[i];
        }
    }
}

void Adam::step(const std::vector<Param*>& params) {
    ++t;
    double b1t = 1.0 - std::pow(beta1, double(t));
    double b2t = 1.0 - std::pow(beta2, double(t));
    for (Param* p : params) {
        auto& mm = m[p];
        auto& vv = v[p];
        if (mm.size() != p->size()) mm.assign(p->size(), 0.0);
        if (vv.size() != p->size()) vv.assign(p->size(), 0.0);
        for (size_t i = 0; i < p->size(); ++i) {
            double g = p->g[i];
            mm[i] = beta1 * mm[i] + (1.0 - beta1) * g;
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * g * g;
            p->w[i] -= lr * (mm[i] / b1t) / (std::sqrt(vv[i] / b2t) + eps);
        }
    }
}

void zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

void clip_grad_norm(const std::vector<Param*>& params, double max_norm) {
    double sq = 0.0;
    for (Param* p : params)
        for (double g : p->g) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    double s = max_norm / norm;
    for (Param* p : params)
        for (double& g : p->g) g *= s;
}

}  // namespace dcl::ad
