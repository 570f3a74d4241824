#include "kge/hole.hpp"

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace kge {

void circular_correlation_direct(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    const std::size_t d = a.size();
    for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += a[i] * b[(i + k) % d];
        out[k] = s;
    }
}

void circular_convolution_direct(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    const std::size_t d = a.size();
    for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += a[i] * b[(k + d - i) % d];
        out[k] = s;
    }
}

namespace {

struct Plans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

// The FFTW planner is not thread-safe; execution with the new-array interface is.
class PlanCache {
public:
    ~PlanCache() {
        for (auto& [n, p] : plans_) {
            fftw_destroy_plan(p.forward);
            fftw_destroy_plan(p.backward);
        }
    }

    Plans get(std::size_t n) {
        std::lock_guard lock(mu_);
        auto it = plans_.find(n);
        if (it != plans_.end()) return it->second;
        std::vector<double> real(n);
        std::vector<fftw_complex> freq(n / 2 + 1);
        const int len = static_cast<int>(n);
        Plans p;
        p.forward = fftw_plan_dft_r2c_1d(len, real.data(), freq.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        p.backward = fftw_plan_dft_c2r_1d(len, freq.data(), real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!p.forward || !p.backward) throw std::runtime_error("FFTW planning failed");
        plans_.emplace(n, p);
        return p;
    }

private:
    std::mutex mu_;
    std::map<std::size_t, Plans> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

// out = IFFT(op(FFT(a)) * FFT(b)), op = conj for correlation.
void fft_product(std::span<const double> a, std::span<const double> b, std::span<double> out, bool conjugate_a) {
    const std::size_t n = a.size();
    const std::size_t m = n / 2 + 1;
    auto plans = plan_cache().get(n);
    std::vector<double> in_a(a.begin(), a.end()), in_b(b.begin(), b.end());
    std::vector<fftw_complex> fa(m), fb(m);
    fftw_execute_dft_r2c(plans.forward, in_a.data(), fa.data());
    fftw_execute_dft_r2c(plans.forward, in_b.data(), fb.data());
    for (std::size_t i = 0; i < m; ++i) {
        std::complex<double> x(fa[i][0], conjugate_a ? -fa[i][1] : fa[i][1]);
        std::complex<double> y(fb[i][0], fb[i][1]);
        auto z = x * y;
        fa[i][0] = z.real();
        fa[i][1] = z.imag();
    }
    std::vector<double> res(n);
    fftw_execute_dft_c2r(plans.backward, fa.data(), res.data());
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = res[i] * scale;
}

}  // namespace

void circular_correlation_fft(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    fft_product(a, b, out, true);
}

void circular_convolution_fft(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    fft_product(a, b, out, false);
}

void circular_correlation(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    if (a.size() >= kFftThreshold)
        circular_correlation_fft(a, b, out);
    else
        circular_correlation_direct(a, b, out);
}

void circular_convolution(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    if (a.size() >= kFftThreshold)
        circular_convolution_fft(a, b, out);
    else
        circular_convolution_direct(a, b, out);
}

}  // namespace kge
