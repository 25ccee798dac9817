#pragma once

#include <cstdint>
#include <vector>

#include "mbsnn/neuron.hpp"

namespace mbsnn {

// Gaussian membrane-potential model; the only distribution family supported.
struct MembraneDist {
    double mean = 0.0;
    double stddev = 1.0;

    void validate() const { check_shape(stddev > 0.0, "stddev must be positive"); }
};

struct SpikePmf {
    std::vector<double> values;  // strictly increasing spike values
    std::vector<double> probs;

    void validate() const;
};

// Standard normal CDF via erfc; |error| is a few ulps, far below 1e-10.
double normal_cdf(double x);

// Exact bin probabilities of the quantizer output: bin edges sit at
// k * 2^-n * v_th, the bottom bin absorbs everything below the first edge and
// the top bin is open above.
SpikePmf spike_pmf_analytic(const MembraneDist& dist, double v_th, BitFormat fmt);

// Empirical histogram over `samples` draws pushed through the same quantizer
// the neuron module fires with. Deterministic for a fixed seed.
SpikePmf spike_pmf_mc(const MembraneDist& dist, double v_th, BitFormat fmt,
                      std::int64_t samples, std::uint64_t seed);

// -sum p log2 p with 0 log 0 := 0. Reported in bits.
double entropy_of_pmf(const SpikePmf& pmf);

// Differential entropy of the Gaussian membrane model: 1/2 log2(2 pi e std^2).
double membrane_entropy_gaussian(const MembraneDist& dist);

// H(U) - H(S): information lost converting membrane potential to spikes.
double forward_loss(const MembraneDist& dist, double v_th, BitFormat fmt);

}  // namespace mbsnn
