#pragma once

// Independent reference implementations used only by tests. These must stay
// decoupled from the library code paths they check: the amortization oracle
// simulates the balance month by month, gradients come from central finite
// differences, optima from brute-force grids, and integrals from quadrature.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

/// Month-by-month amortization: returns the sum of level payments and checks
/// that the balance closes to zero at the end of the term.
inline double amortized_total_payment(double amount, double apr_pct, int term_months, int freq = 12) {
    if (apr_pct == 0.0) return amount;
    const double r = apr_pct / 100.0 / freq;
    // level payment solving the annuity; the loop below verifies it.
    const double payment = amount * r / (1.0 - std::pow(1.0 + r, -term_months));
    double balance = amount;
    double paid = 0.0;
    for (int m = 0; m < term_months; ++m) {
        const double interest = balance * r;
        const double principal = payment - interest;
        balance -= principal;
        paid += payment;
    }
    if (std::abs(balance) > 1e-6 * amount)
        throw std::runtime_error("amortized_total_payment: balance did not close");
    return paid;
}

/// Central finite difference of a scalar function of one coordinate.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Arg max of f over a uniform grid of `points` samples on [lo, hi]; ties go
/// to the lower argument.
inline double brute_force_argmax(const std::function<double(double)>& f, double lo, double hi,
                                 long points) {
    double best_x = lo;
    double best_v = f(lo);
    for (long i = 1; i < points; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        const double v = f(x);
        if (v > best_v) {
            best_v = v;
            best_x = x;
        }
    }
    return best_x;
}

/// Composite Simpson integration (n must be even).
inline double simpson(const std::function<double(double)>& f, double lo, double hi, int n = 2000) {
    if (n % 2) ++n;
    const double h = (hi - lo) / n;
    double s = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

/// Pairwise AUC by enumeration: P(score_pos > score_neg) + 0.5 P(tie).
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    if (pairs == 0) throw std::runtime_error("pairwise_auc: need both classes");
    return wins / static_cast<double>(pairs);
}

}  // namespace oracle
