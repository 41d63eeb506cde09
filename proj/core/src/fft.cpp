#include "flash/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace flash {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n))
        throw std::invalid_argument("fft: length " + std::to_string(n) + " is not a power of two");
    if (n == 1) return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        // Twiddles evaluated directly (no recurrence) to keep error at O(eps log n).
        std::vector<std::complex<double>> tw(half);
        for (std::size_t k = 0; k < half; ++k)
            tw[k] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                                        static_cast<double>(len));
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + half] * tw[k];
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
}

namespace {

void check_dims(std::size_t h, std::size_t w) {
    if (!is_power_of_two(h) || !is_power_of_two(w))
        throw std::invalid_argument("fft2d: dims " + std::to_string(h) + "x" + std::to_string(w) +
                                    " must be powers of two");
}

ComplexGrid transform(const ComplexGrid& in, bool inverse) {
    check_dims(in.height, in.width);
    const std::size_t h = in.height, w = in.width;
    std::vector<std::complex<double>> buf(h * w);
    for (std::size_t i = 0; i < h * w; ++i) buf[i] = {in.real[i], in.imag[i]};

    for (std::size_t r = 0; r < h; ++r) fft_inplace(std::span(buf).subspan(r * w, w), inverse);
    std::vector<std::complex<double>> col(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) col[r] = buf[r * w + c];
        fft_inplace(col, inverse);
        for (std::size_t r = 0; r < h; ++r) buf[r * w + c] = col[r];
    }

    ComplexGrid out(h, w);
    for (std::size_t i = 0; i < h * w; ++i) {
        out.real[i] = buf[i].real();
        out.imag[i] = buf[i].imag();
    }
    return out;
}

}  // namespace

ComplexGrid fft2d(std::span<const double> grid, std::size_t height, std::size_t width) {
    if (grid.size() != height * width)
        throw std::invalid_argument("fft2d: grid size does not match dims");
    ComplexGrid in(height, width);
    std::copy(grid.begin(), grid.end(), in.real.begin());
    return transform(in, false);
}

ComplexGrid fft2d(const ComplexGrid& grid) { return transform(grid, false); }

ComplexGrid ifft2d_unnormalized(const ComplexGrid& grid) { return transform(grid, true); }

InverseResult ifft2d(const ComplexGrid& grid) {
    ComplexGrid raw = transform(grid, true);
    const double scale = 1.0 / static_cast<double>(grid.height * grid.width);
    InverseResult out;
    out.values.resize(raw.real.size());
    for (std::size_t i = 0; i < raw.real.size(); ++i) {
        out.values[i] = raw.real[i] * scale;
        out.max_imag = std::max(out.max_imag, std::abs(raw.imag[i] * scale));
    }
    return out;
}

}  // namespace flash
