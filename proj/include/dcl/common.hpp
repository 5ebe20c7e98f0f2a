#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcl {

// Error taxonomy. Config errors map to CLI exit code 2, stage failures to 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& m) : std::runtime_error(m) {}
};
struct StageError : std::runtime_error {
    explicit StageError(const std::string& m) : std::runtime_error(m) {}
};

// Deterministic PRNG. splitmix64 state transitions with hand-rolled
// distributions so that byte-identical outputs do not depend on the
// standard library's <random> implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    int range(int lo, int hi) {  // inclusive bounds
        return lo + int(below(uint64_t(hi - lo + 1)));
    }

    bool chance(double p) { return uniform() < p; }

    // Box-Muller; one value per call, deterministic call sequence.
    double gauss(double mean = 0.0, double sigma = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sigma * spare_;
        }
        double u1 = 0.0, u2 = 0.0;
        do { u1 = uniform(); } while (u1 <= 1e-300);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mean + sigma * r * std::cos(a);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream, e.g. one per video.
    Rng fork(uint64_t salt) const {
        uint64_t s = state_;
        s ^= salt * 0xff51afd7ed558ccdULL + 0x2545f4914f6cdd1dULL;
        return Rng(s);
    }

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Floats serialized with 9 significant digits everywhere so that repeated
// runs produce byte-identical artifacts.
std::string format_g9(double v);

// FNV-1a, used for run-directory naming from the canonical config dump.
uint64_t fnv1a(const std::string& s);
std::string hex16(uint64_t v);

// Dense row-major matrix just big enough for the handful of small solves
// (oracle map fitting, Kalman covariance updates).
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;
    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * c, 0.0) {}
    double& operator()(int r, int c) { return a[size_t(r) * cols + c]; }
    double operator()(int r, int c) const { return a[size_t(r) * cols + c]; }
};

Mat mat_mul(const Mat& x, const Mat& y);
Mat mat_transpose(const Mat& x);
// Solves A x = b for square A by Gaussian elimination with partial pivoting.
std::vector<double> mat_solve(Mat A, std::vector<double> b);
// Least-squares map M (t_dim x n_dim) with M * f_i ~= t_i; ridge keeps the
// normal equations well posed when inputs are nearly dependent.
Mat fit_linear_map(const std::vector<std::vector<double>>& inputs,
                   const std::vector<std::vector<double>>& targets,
                   double ridge = 1e-9);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace dcl
