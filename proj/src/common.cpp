#include "dcl/common.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dcl {

std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex16(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
    return buf;
}

Mat mat_mul(const Mat& x, const Mat& y) {
    Mat z(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int k = 0; k < x.cols; ++k) {
            double xv = x(i, k);
            if (xv == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) z(i, j) += xv * y(k, j);
        }
    return z;
}

Mat mat_transpose(const Mat& x) {
    Mat z(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) z(j, i) = x(i, j);
    return z;
}

std::vector<double> mat_solve(Mat A, std::vector<double> b) {
    int n = A.rows;
    if (A.cols != n || int(b.size()) != n) throw DataError("mat_solve: shape mismatch");
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(A(r, col)) > std::fabs(A(piv, col))) piv = r;
        if (std::fabs(A(piv, col)) < 1e-14) throw DataError("mat_solve: singular matrix");
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(A(piv, j), A(col, j));
            std::swap(b[piv], b[col]);
        }
        double d = A(col, col);
        for (int r = col + 1; r < n; ++r) {
            double f = A(r, col) / d;
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) A(r, j) -= f * A(col, j);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int j = r + 1; j < n; ++j) s -= A(r, j) * x[j];
        x[r] = s / A(r, r);
    }
    return x;
}

Mat fit_linear_map(const std::vector<std::vector<double>>& inputs,
                   const std::vector<std::vector<double>>& targets,
                   double ridge) {
    if (inputs.empty() || inputs.size() != targets.size())
        throw DataError("fit_linear_map: bad constraint set");
    int n = int(inputs.size());
    int d_in = int(inputs[0].size());
    int d_out = int(targets[0].size());

    // M = T F^T (F F^T ... ) via the n x n Gram system: M = T G^{-1}-weighted
    // combination of the input columns, exact when inputs are independent.
    Mat G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < d_in; ++k) s += inputs[i][k] * inputs[j][k];
            G(i, j) = s;
            G(j, i) = s;
        }
    for (int i = 0; i < n; ++i) G(i, i) += ridge;

    // Solve G w_j = t_j per output dim; M = sum_i w_ij * f_i^T.
    Mat M(d_out, d_in);
    for (int o = 0; o < d_out; ++o) {
        std::vector<double> rhs(n);
        for (int i = 0; i < n; ++i) rhs[i] = targets[i][o];
        std::vector<double> w = mat_solve(G, rhs);
        for (int i = 0; i < n; ++i) {
            if (w[i] == 0.0) continue;
            for (int k = 0; k < d_in; ++k) M(o, k) += w[i] * inputs[i][k];
        }
    }
    return M;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f.write(content.data(), std::streamsize(content.size()));
}

}  // namespace dcl
