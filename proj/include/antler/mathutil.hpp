#pragma once

#include <cstddef>
#include <vector>

namespace antler {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Standard normal density.
double norm_pdf(double x);

/// Standard normal CDF, accurate in both tails.
double norm_cdf(double x);

/// Inverse Mills ratio N(z)/Phi(z), stable for very negative z.
double norm_pdf_over_cdf(double z);

/// log(1 + e^x) without overflow.
double softplus(double x);

/// Logistic sigmoid.
double sigmoid(double x);

/// log(sum_i exp(v_i)).
double log_sum_exp(const std::vector<double>& v);

/// Kahan-compensated sum.
double compensated_sum(const std::vector<double>& v);

/// Gauss-Hermite nodes/weights for integrals of the form
/// \int f(x) N(x | mu, var) dx  ~=  sum_i w_i f(mu + sqrt(2 var) x_i)
/// (physicists' convention, weights already divided by sqrt(pi)).
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights; // sums to 1
};

/// Rule of the given order (cached; order >= 1).
const GaussHermite& gauss_hermite(int order);

} // namespace antler
