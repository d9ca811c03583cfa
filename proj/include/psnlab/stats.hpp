#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "psnlab/model.hpp"

namespace psnlab {

inline double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Unbiased sample variance.
inline double variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// Standard error of the sample median via the asymptotic normal approximation
// with a density estimate from the interquartile range.
inline double median_se(std::vector<double> v) {
    if (v.size() < 4) return 0.0;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        double pos = p * (v.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        double f = pos - lo;
        return lo + 1 < v.size() ? v[lo] * (1 - f) + v[lo + 1] * f : v[lo];
    };
    double iqr = q(0.75) - q(0.25);
    double sd = iqr / 1.349;
    return 1.2533 * sd / std::sqrt(static_cast<double>(v.size()));
}

struct MomentSummary {
    double mean = 0, variance = 0, skewness = 0, excess_kurtosis = 0;
};

// Biased (population) moment ratios b1 = m3 / m2^{3/2}, b2 = m4 / m2^2.
inline MomentSummary summarize(const std::vector<double>& v) {
    MomentSummary s;
    const double n = static_cast<double>(v.size());
    if (v.size() < 2) return s;
    s.mean = mean(v);
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        double d = x - s.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    s.variance = variance(v);
    s.skewness = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
    s.excess_kurtosis = m2 > 0 ? m4 / (m2 * m2) - 3.0 : 0.0;
    return s;
}

struct OmnibusResult {
    double z_skew = 0, z_kurt = 0, statistic = 0, p_value = 1;
};

// D'Agostino-Pearson K^2 = Z(b1)^2 + Z(b2)^2, p from chi-square with 2 df.
inline OmnibusResult omnibus_normality(const std::vector<double>& v) {
    if (v.size() < 20) throw DomainError("omnibus_normality: need at least 20 observations");
    const double n = static_cast<double>(v.size());
    auto s = summarize(v);
    double b1 = s.skewness, b2 = s.excess_kurtosis + 3.0;
    OmnibusResult r;
    double y = b1 * std::sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)));
    double beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) /
                   ((n - 2) * (n + 5) * (n + 7) * (n + 9));
    double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
    double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
    double alpha = std::sqrt(2.0 / (w2 - 1.0));
    double ya = y / alpha;
    r.z_skew = delta * std::log(ya + std::sqrt(ya * ya + 1.0));
    double e = 3.0 * (n - 1) / (n + 1);
    double var = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) * (n + 1) * (n + 3) * (n + 5));
    double x = (b2 - e) / std::sqrt(var);
    double sb1 = 6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9)) *
                 std::sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)));
    double a = 6.0 + 8.0 / sb1 * (2.0 / sb1 + std::sqrt(1.0 + 4.0 / (sb1 * sb1)));
    double t = (1.0 - 2.0 / a) / (1.0 + x * std::sqrt(2.0 / (a - 4.0)));
    r.z_kurt = ((1.0 - 2.0 / (9.0 * a)) - std::cbrt(t)) / std::sqrt(2.0 / (9.0 * a));
    r.statistic = r.z_skew * r.z_skew + r.z_kurt * r.z_kurt;
    r.p_value = std::exp(-0.5 * r.statistic);
    return r;
}

inline double chi_square_sf(double stat, double df) {
    if (df <= 0) return 1.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * std::max(0.0, stat));
}

struct ChiSquareResult {
    double statistic = 0, df = 0, p_value = 1;
};

// Homogeneity test on a rows x cols count table; empty columns are dropped.
inline ChiSquareResult chi_square_homogeneity(const std::vector<std::vector<double>>& table) {
    ChiSquareResult r;
    if (table.size() < 2) return r;
    std::size_t cols = table[0].size();
    std::vector<double> rs(table.size(), 0.0), cs(cols, 0.0);
    double tot = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            rs[i] += table[i][j];
            cs[j] += table[i][j];
            tot += table[i][j];
        }
    if (tot <= 0) return r;
    int used_cols = 0, used_rows = 0;
    for (double c : cs) used_cols += c > 0;
    for (double x : rs) used_rows += x > 0;
    for (std::size_t i = 0; i < table.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            if (cs[j] <= 0 || rs[i] <= 0) continue;
            double e = rs[i] * cs[j] / tot;
            r.statistic += (table[i][j] - e) * (table[i][j] - e) / e;
        }
    r.df = static_cast<double>((used_rows - 1) * (used_cols - 1));
    r.p_value = chi_square_sf(r.statistic, r.df);
    return r;
}

// Goodness of fit of counts against probabilities.
inline ChiSquareResult chi_square_gof(const std::vector<double>& counts,
                                      const std::vector<double>& probs) {
    ChiSquareResult r;
    double tot = std::accumulate(counts.begin(), counts.end(), 0.0);
    int used = 0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
        if (probs[j] <= 0) continue;
        double e = tot * probs[j];
        r.statistic += (counts[j] - e) * (counts[j] - e) / e;
        ++used;
    }
    r.df = used - 1;
    r.p_value = chi_square_sf(r.statistic, r.df);
    return r;
}

// Least-squares slope of log y on log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("loglog_slope: need two points");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    double mx = mean(lx), my = mean(ly), sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxy / sxx;
}

}  // namespace psnlab
