#pragma once

// Kolmogorov-Smirnov tests and small summary helpers.

#include <functional>
#include <vector>

namespace so3diff::stats {

struct KsResult {
  double statistic;
  double p_value;
};

/// Asymptotic Kolmogorov survival function with the Stephens small-sample
/// correction, evaluated at sqrt(n_eff) D.
double kolmogorov_p(double d, double n_eff);

KsResult ks_1samp(std::vector<double> data, const std::function<double(double)>& cdf);
KsResult ks_2samp(std::vector<double> a, std::vector<double> b);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

double mean(const std::vector<double>& v);
/// Sample standard deviation (n - 1 denominator).
double stddev(const std::vector<double>& v);

}  // namespace so3diff::stats
