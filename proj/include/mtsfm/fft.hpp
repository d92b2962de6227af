// fft.hpp - thin wrapper around FFTW3 double-precision 1-D transforms.
//
// Plans are cached per (size, direction) and created with
// FFTW_ESTIMATE | FFTW_UNALIGNED so a cached plan can execute on any heap
// buffer via the new-array interface. Plan creation is serialized behind a
// mutex; concurrent execution of one plan on distinct arrays is safe.
// FFTW_ESTIMATE keeps planning deterministic, which the reproducibility
// contract of the toolkit relies on.

#pragma once

#include <fftw3.h>

#include <mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "mtsfm/core.hpp"

namespace mtsfm {

namespace detail {

class FftPlanCache {
public:
    static FftPlanCache& instance() {
        static FftPlanCache cache;
        return cache;
    }

    fftw_plan get(std::size_t n, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        std::uint64_t key = (static_cast<std::uint64_t>(n) << 1) |
                            (sign == FFTW_FORWARD ? 0u : 1u);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;

        std::vector<cplx> scratch(n);
        fftw_complex* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!p) throw std::runtime_error("fftw_plan_dft_1d failed");
        plans_.emplace(key, p);
        return p;
    }

private:
    FftPlanCache() = default;
    std::mutex mutex_;
    std::unordered_map<std::uint64_t, fftw_plan> plans_;
};

}  // namespace detail

// In-place DFT; sign = FFTW_FORWARD (-1) or FFTW_BACKWARD (+1), unnormalized.
inline void fft_inplace(std::vector<cplx>& data, int sign) {
    if (data.empty()) return;
    fftw_plan p = detail::FftPlanCache::instance().get(data.size(), sign);
    fftw_complex* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, buf, buf);
}

inline std::vector<cplx> fft(std::vector<cplx> data) {
    fft_inplace(data, FFTW_FORWARD);
    return data;
}

// Inverse DFT including the 1/N normalization.
inline std::vector<cplx> ifft(std::vector<cplx> data) {
    fft_inplace(data, FFTW_BACKWARD);
    const double scale = 1.0 / static_cast<double>(data.size());
    for (cplx& v : data) v *= scale;
    return data;
}

}  // namespace mtsfm
