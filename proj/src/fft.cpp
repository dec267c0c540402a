#include "fft.hpp"

#include <cstring>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

namespace eisbayes {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<std::complex<double>> run(std::span<const std::complex<double>> in, int sign) {
    const std::size_t n = in.size();
    if (n == 0) throw std::invalid_argument("fft: empty input");
    fftw_complex* buf = fftw_alloc_complex(n);
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, in.data(), n * sizeof(fftw_complex));
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::vector<std::complex<double>> out(n);
    // std::complex<double> is layout-compatible with double[2]
    std::memcpy(reinterpret_cast<double*>(out.data()), buf, n * sizeof(fftw_complex));
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);
    return out;
}

}  // namespace

std::vector<std::complex<double>> fft_forward(std::span<const std::complex<double>> in) {
    return run(in, FFTW_FORWARD);
}

std::vector<std::complex<double>> fft_inverse(std::span<const std::complex<double>> in) {
    auto out = run(in, FFTW_BACKWARD);
    const double scale = 1.0 / double(in.size());
    for (auto& v : out) v *= scale;
    return out;
}

}  // namespace eisbayes
