#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <vector>

#include "quopt/error.hpp"

namespace quopt::fft {

/// FFTW's planner is not re-entrant; execution with the new-array API is.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class Plan {
public:
    Plan() = default;
    explicit Plan(fftw_plan p) : plan_(p) {
        require(p != nullptr, ErrorCode::InvalidArgument, "FFTW could not create a plan");
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    Plan(Plan&& o) noexcept : plan_(o.plan_) { o.plan_ = nullptr; }
    Plan& operator=(Plan&& o) noexcept {
        if (this != &o) {
            reset();
            plan_ = o.plan_;
            o.plan_ = nullptr;
        }
        return *this;
    }
    ~Plan() { reset(); }

    [[nodiscard]] fftw_plan get() const noexcept { return plan_; }

private:
    void reset() noexcept {
        if (plan_ != nullptr) {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
            plan_ = nullptr;
        }
    }
    fftw_plan plan_ = nullptr;
};

inline fftw_complex* as_fftw(std::complex<double>* p) noexcept { return reinterpret_cast<fftw_complex*>(p); }

/// Zero-initialized scratch array from fftw_malloc, so SIMD code paths do
/// not depend on where the heap happened to place it.
template <typename T>
class AlignedBuffer {
public:
    explicit AlignedBuffer(std::size_t n) : n_(n), data_(static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)))) {
        require(data_ != nullptr, ErrorCode::InvalidArgument, "FFT buffer allocation failed");
        std::fill(data_, data_ + n_, T{});
    }
    AlignedBuffer(const AlignedBuffer&) = delete;
    AlignedBuffer& operator=(const AlignedBuffer&) = delete;
    ~AlignedBuffer() { fftw_free(data_); }

    [[nodiscard]] std::span<T> span() noexcept { return {data_, n_}; }
    [[nodiscard]] T* data() noexcept { return data_; }
    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }

private:
    std::size_t n_;
    T* data_;
};

/// Real-to-complex transforms of length n (n/2 + 1 output bins). Plans are
/// shared per length for the life of the process so every caller, on any
/// thread, executes the same plan.
class RealTransform {
public:
    explicit RealTransform(std::size_t n) : n_(n) {
        require(n >= 1, ErrorCode::InvalidArgument, "transform length must be positive");
        const Pair& plans = cached(n);
        forward_ = plans.forward.get();
        inverse_ = plans.inverse.get();
    }

    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] std::size_t bins() const noexcept { return n_ / 2 + 1; }

    void forward(std::span<double> in, std::span<std::complex<double>> out) const {
        fftw_execute_dft_r2c(forward_, in.data(), as_fftw(out.data()));
    }
    /// Unnormalized inverse; `in` is overwritten.
    void inverse(std::span<std::complex<double>> in, std::span<double> out) const {
        fftw_execute_dft_c2r(inverse_, as_fftw(in.data()), out.data());
    }

private:
    struct Pair {
        Plan forward;
        Plan inverse;
    };

    static const Pair& cached(std::size_t n) {
        std::lock_guard lock(planner_mutex());
        static std::map<std::size_t, Pair> plans;
        auto it = plans.find(n);
        if (it != plans.end()) return it->second;
        std::vector<double> in(n);
        std::vector<std::complex<double>> out(n / 2 + 1);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        Pair p;
        p.forward = Plan(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), as_fftw(out.data()), flags));
        p.inverse = Plan(fftw_plan_dft_c2r_1d(static_cast<int>(n), as_fftw(out.data()), in.data(),
                                              flags | FFTW_DESTROY_INPUT));
        return plans.emplace(n, std::move(p)).first->second;
    }

    std::size_t n_;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

/// Batched real-to-complex transform over `count` interleaved series:
/// element k of series p lives at in[k * in_stride + p], bin f of series p at
/// out[f * count + p].
class InterleavedTransform {
public:
    InterleavedTransform(std::size_t n, std::size_t count, std::size_t in_stride)
        : n_(n), count_(count), in_stride_(in_stride) {
        require(n >= 1 && count >= 1 && in_stride >= count, ErrorCode::InvalidArgument,
                "invalid batched transform layout");
        std::vector<double> in((n - 1) * in_stride + count);
        std::vector<std::complex<double>> out(bins() * count);
        const int len = static_cast<int>(n);
        std::lock_guard lock(planner_mutex());
        plan_ = Plan(fftw_plan_many_dft_r2c(1, &len, static_cast<int>(count), in.data(), nullptr,
                                            static_cast<int>(in_stride), 1, as_fftw(out.data()), nullptr,
                                            static_cast<int>(count), 1, FFTW_ESTIMATE | FFTW_UNALIGNED));
    }

    [[nodiscard]] std::size_t bins() const noexcept { return n_ / 2 + 1; }

    /// `in` starts at element 0 of series 0 and is left untouched.
    void forward(const double* in, std::span<std::complex<double>> out) const {
        require(out.size() == bins() * count_, ErrorCode::InvalidArgument, "batched transform output size mismatch");
        fftw_execute_dft_r2c(plan_.get(), const_cast<double*>(in), as_fftw(out.data()));
    }

private:
    std::size_t n_;
    std::size_t count_;
    std::size_t in_stride_;
    Plan plan_;
};

}  // namespace quopt::fft
