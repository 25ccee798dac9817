#include "mbsnn/entropy.hpp"

#include <cmath>

#include "mbsnn/rng.hpp"

namespace mbsnn {

void SpikePmf::validate() const {
    check_shape(values.size() == probs.size(), "pmf values/probs length mismatch");
    check_shape(!values.empty(), "pmf must be non-empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        check_shape(probs[i] >= 0.0, "pmf probabilities must be non-negative");
        if (i > 0) check_shape(values[i] > values[i - 1], "pmf values must be strictly increasing");
        sum += probs[i];
    }
    check_shape(std::abs(sum - 1.0) <= 1e-12, "pmf probabilities must sum to 1");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

SpikePmf spike_pmf_analytic(const MembraneDist& dist, double v_th, BitFormat fmt) {
    dist.validate();
    fmt.validate();
    check_shape(v_th > 0.0, "threshold must be positive");
    const int n_codes = fmt.code_count();
    const double edge_width = fmt.scale() * v_th;
    SpikePmf pmf;
    pmf.values.resize(static_cast<std::size_t>(n_codes));
    pmf.probs.resize(static_cast<std::size_t>(n_codes));
    auto cdf_at = [&](double u) { return normal_cdf((u - dist.mean) / dist.stddev); };
    for (int k = 0; k < n_codes; ++k) {
        pmf.values[static_cast<std::size_t>(k)] = fmt.value_of(k);
        double p;
        if (k == 0) {
            p = cdf_at(edge_width);
        } else if (k == n_codes - 1) {
            p = 1.0 - cdf_at(k * edge_width);
        } else {
            p = cdf_at((k + 1) * edge_width) - cdf_at(k * edge_width);
        }
        pmf.probs[static_cast<std::size_t>(k)] = p;
    }
    return pmf;
}

SpikePmf spike_pmf_mc(const MembraneDist& dist, double v_th, BitFormat fmt,
                      std::int64_t samples, std::uint64_t seed) {
    dist.validate();
    fmt.validate();
    check_shape(v_th > 0.0, "threshold must be positive");
    check_shape(samples >= 1, "need at least one sample");
    std::vector<std::int64_t> counts(static_cast<std::size_t>(fmt.code_count()), 0);
    Rng rng(seed);
    for (std::int64_t i = 0; i < samples; ++i) {
        const double u = rng.normal(dist.mean, dist.stddev);
        ++counts[static_cast<std::size_t>(quantize_code(u, v_th, fmt))];
    }
    SpikePmf pmf;
    pmf.values.resize(counts.size());
    pmf.probs.resize(counts.size());
    for (int k = 0; k < fmt.code_count(); ++k) {
        pmf.values[static_cast<std::size_t>(k)] = fmt.value_of(k);
        pmf.probs[static_cast<std::size_t>(k)] =
            static_cast<double>(counts[static_cast<std::size_t>(k)]) /
            static_cast<double>(samples);
    }
    return pmf;
}

double entropy_of_pmf(const SpikePmf& pmf) {
    pmf.validate();
    double h = 0.0;
    for (double p : pmf.probs) {
        if (p > 0.0) h -= p * std::log2(p);
    }
    return h;
}

double membrane_entropy_gaussian(const MembraneDist& dist) {
    dist.validate();
    // 1/2 log2(2 pi e std^2)
    return 0.5 * std::log2(2.0 * 3.14159265358979323846 * 2.71828182845904523536 *
                           dist.stddev * dist.stddev);
}

double forward_loss(const MembraneDist& dist, double v_th, BitFormat fmt) {
    return membrane_entropy_gaussian(dist) - entropy_of_pmf(spike_pmf_analytic(dist, v_th, fmt));
}

}  // namespace mbsnn
