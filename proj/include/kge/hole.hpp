#pragma once

#include <span>

namespace kge {

// [a * b]_k = sum_i a_i b_{(i+k) mod d}
void circular_correlation_direct(std::span<const double> a, std::span<const double> b, std::span<double> out);
// [a (*) b]_k = sum_i a_i b_{(k-i) mod d}
void circular_convolution_direct(std::span<const double> a, std::span<const double> b, std::span<double> out);

// FFT routes (FFTW). Thread-safe; plans are cached per length.
void circular_correlation_fft(std::span<const double> a, std::span<const double> b, std::span<double> out);
void circular_convolution_fft(std::span<const double> a, std::span<const double> b, std::span<double> out);

// Dispatch on length: direct below kFftThreshold, FFT at or above.
inline constexpr std::size_t kFftThreshold = 64;
void circular_correlation(std::span<const double> a, std::span<const double> b, std::span<double> out);
void circular_convolution(std::span<const double> a, std::span<const double> b, std::span<double> out);

}  // namespace kge
