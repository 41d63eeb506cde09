#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace flash {

// Row-major H x W complex grid stored as separate real and imaginary planes.
struct ComplexGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> real;
    std::vector<double> imag;

    ComplexGrid() = default;
    ComplexGrid(std::size_t h, std::size_t w) : height(h), width(w), real(h * w, 0.0), imag(h * w, 0.0) {}

    std::complex<double> at(std::size_t r, std::size_t c) const {
        return {real[r * width + c], imag[r * width + c]};
    }
};

struct InverseResult {
    std::vector<double> values;  // real part, row-major
    double max_imag = 0.0;       // largest |imaginary| discarded
};

bool is_power_of_two(std::size_t n);

// In-place radix-2 Cooley-Tukey transform. Forward uses e^{-i...}; inverse
// uses e^{+i...} and does NOT apply the 1/N factor.
void fft_inplace(std::span<std::complex<double>> a, bool inverse);

// Unnormalized forward 2D DFT of a real H x W grid.
ComplexGrid fft2d(std::span<const double> grid, std::size_t height, std::size_t width);
// Forward 2D DFT of a complex grid.
ComplexGrid fft2d(const ComplexGrid& grid);
// Inverse 2D DFT with the 1/(H*W) factor; returns the real part.
InverseResult ifft2d(const ComplexGrid& grid);
// Inverse 2D DFT without any normalisation, complex result.
ComplexGrid ifft2d_unnormalized(const ComplexGrid& grid);

}  // namespace flash
