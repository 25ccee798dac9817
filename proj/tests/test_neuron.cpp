#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mbsnn/neuron.hpp"
#include "mbsnn/rng.hpp"

using namespace mbsnn;

namespace {

NeuronConfig lif_cfg(BitFormat fmt, double v_th = 0.6, double tau = 4.0) {
    NeuronConfig cfg;
    cfg.v_th = v_th;
    cfg.tau = tau;
    cfg.format = fmt;
    return cfg;
}

double fire_value(double u, const NeuronConfig& cfg) {
    Tensor t({1}, {u});
    SpikeTensor s = fire_quantize(t, cfg);
    return s.format.value_of(s.codes[0]);
}

}  // namespace

TEST_CASE("bit format code set and scale") {
    BitFormat f{2, 1};
    CHECK(f.code_count() == 8);
    CHECK(f.scale() == 0.5);
    CHECK(f.max_value() == 3.5);
    const BitFormat zero_bits{0, 0};
    CHECK_THROWS_AS(zero_bits.validate(), std::invalid_argument);
}

TEST_CASE("charge follows the leaky update") {
    NeuronConfig cfg = lif_cfg({1, 0});
    NeuronLayerState s = NeuronLayerState::zeros({1});
    s.u[0] = 0.8;
    s = charge(std::move(s), Tensor({1}, {0.1}), cfg);
    CHECK(s.u[0] == doctest::Approx(0.75 * 0.8 + 0.1));

    NeuronConfig integ = lif_cfg({1, 0});
    integ.leak = LeakMode::none;
    NeuronLayerState t = NeuronLayerState::zeros({1});
    t.u[0] = 0.2;
    t = charge(std::move(t), Tensor({1}, {0.3}), integ);
    CHECK(t.u[0] == doctest::Approx(0.5));
}

TEST_CASE("charge decays geometrically with zero input") {
    NeuronConfig cfg = lif_cfg({1, 0});
    NeuronLayerState s = NeuronLayerState::zeros({1});
    s.u[0] = 1.0;
    Tensor zero({1});
    for (int t = 1; t <= 6; ++t) {
        s = charge(std::move(s), zero, cfg);
        CHECK(s.u[0] == doctest::Approx(std::pow(0.75, t)));
    }
}

TEST_CASE("fire_quantize reproduces the multi-bit branch tables") {
    // (2,0): values {0,1,2,3}, branches at u/v_th = 1, 2, 3
    NeuronConfig c20 = lif_cfg({2, 0});
    CHECK(fire_value(1.3, c20) == 2.0);       // u/v_th = 2.1667
    CHECK(fire_value(0.59, c20) == 0.0);
    CHECK(fire_value(0.6, c20) == 1.0);
    CHECK(fire_value(10.0, c20) == 3.0);      // saturation
    CHECK(fire_value(-0.2, c20) == 0.0);

    // (1,1): values {0,0.5,1,1.5}, branches at u/v_th = 0.5, 1, 1.5
    NeuronConfig c11 = lif_cfg({1, 1});
    CHECK(fire_value(0.35, c11) == 0.5);      // u/v_th = 0.5833
    CHECK(fire_value(0.29, c11) == 0.0);
    CHECK(fire_value(0.61, c11) == 1.0);
    CHECK(fire_value(5.0, c11) == 1.5);
}

TEST_CASE("format (1,0) reduces to the binary threshold rule") {
    NeuronConfig cfg = lif_cfg({1, 0});
    Rng rng(100);
    for (int i = 0; i < 2000; ++i) {
        const double u = rng.uniform(-3.0, 3.0);
        const double want = u >= cfg.v_th ? 1.0 : 0.0;
        CHECK(fire_value(u, cfg) == want);
    }
    CHECK(fire_value(cfg.v_th, cfg) == 1.0);  // boundary is lower-inclusive
}

TEST_CASE("fire_quantize is monotone in u") {
    Rng rng(7);
    for (BitFormat fmt : {BitFormat{1, 0}, BitFormat{2, 1}, BitFormat{1, 3}}) {
        NeuronConfig cfg = lif_cfg(fmt);
        for (int i = 0; i < 500; ++i) {
            double a = rng.uniform(-2.0, 4.0);
            double b = rng.uniform(-2.0, 4.0);
            if (a > b) std::swap(a, b);
            CHECK(fire_value(a, cfg) <= fire_value(b, cfg));
        }
    }
}

TEST_CASE("quantization error bound inside the representable range") {
    Rng rng(21);
    for (BitFormat fmt : {BitFormat{1, 0}, BitFormat{2, 0}, BitFormat{2, 1}, BitFormat{1, 3}}) {
        NeuronConfig cfg = lif_cfg(fmt);
        const double hi = fmt.max_value() * cfg.v_th;
        for (int i = 0; i < 1000; ++i) {
            const double u = rng.uniform(0.0, hi);
            const double err = u - fire_value(u, cfg) * cfg.v_th;
            CHECK(err >= 0.0);
            CHECK(err < fmt.scale() * cfg.v_th);
        }
    }
}

TEST_CASE("reset modes") {
    NeuronConfig hard = lif_cfg({1, 0});
    NeuronLayerState s = NeuronLayerState::zeros({1});
    s.u[0] = 0.9;
    SpikeTensor sp = fire_quantize(s.u, hard);
    CHECK(sp.codes[0] == 1);
    s = reset(std::move(s), sp, hard);
    CHECK(s.u[0] == 0.0);
    CHECK(s.last_spike_code[0] == 1);

    NeuronConfig sub = lif_cfg({2, 1});
    sub.reset_mode = ResetMode::subtract;
    NeuronLayerState t = NeuronLayerState::zeros({1});
    t.u[0] = 1.9;
    SpikeTensor sq = fire_quantize(t.u, sub);
    CHECK(sq.codes[0] == 6);  // floor(1.9 / 0.3)
    t = reset(std::move(t), sq, sub);
    CHECK(t.u[0] == doctest::Approx(1.9 - 3.0 * 0.6));

    // code 0 leaves u untouched in both modes
    for (NeuronConfig cfg : {hard, sub}) {
        NeuronLayerState q = NeuronLayerState::zeros({1});
        q.u[0] = 0.25;
        q = reset(std::move(q), fire_quantize(q.u, cfg), cfg);
        CHECK(q.u[0] == 0.25);
    }
}

TEST_CASE("step composes charge, fire, reset") {
    NeuronConfig cfg = lif_cfg({2, 1});
    cfg.reset_mode = ResetMode::subtract;

    SUBCASE("quiescence") {
        NeuronLayerState s = NeuronLayerState::zeros({4});
        auto [s2, spikes] = step(std::move(s), Tensor({4}), cfg);
        for (int i = 0; i < 4; ++i) {
            CHECK(s2.u[i] == 0.0);
            CHECK(spikes.codes[i] == 0);
        }
    }

    SUBCASE("threshold pacing") {
        NeuronConfig pace = lif_cfg({1, 0});
        pace.leak = LeakMode::none;
        NeuronLayerState s = NeuronLayerState::zeros({1});
        Tensor drive({1}, {pace.v_th});
        for (int t = 0; t < 8; ++t) {
            auto [s2, spikes] = step(std::move(s), drive, pace);
            s = std::move(s2);
            CHECK(spikes.codes[0] == 1);
        }
    }

    SUBCASE("matches the three ops composed on a random trace") {
        Rng rng(3);
        NeuronLayerState via_step = NeuronLayerState::zeros({8});
        NeuronLayerState manual = NeuronLayerState::zeros({8});
        for (int t = 0; t < 20; ++t) {
            Tensor x({8});
            for (int i = 0; i < 8; ++i) x[i] = rng.normal(0.3, 0.6);
            auto [s2, spikes] = step(std::move(via_step), x, cfg);
            via_step = std::move(s2);

            manual = charge(std::move(manual), x, cfg);
            SpikeTensor want = fire_quantize(manual.u, cfg);
            manual = reset(std::move(manual), want, cfg);

            CHECK(spikes.codes == want.codes);
            for (int i = 0; i < 8; ++i) CHECK(via_step.u[i] == manual.u[i]);
        }
    }
}

TEST_CASE("subtract-reset rate converges to the drive") {
    NeuronConfig cfg = lif_cfg({2, 1});
    cfg.reset_mode = ResetMode::subtract;
    cfg.leak = LeakMode::none;
    const double s_max = cfg.format.max_value();
    Rng rng(9);
    for (int big_t : {4, 16, 64, 128}) {
        for (int trial = 0; trial < 8; ++trial) {
            const double x = rng.uniform(0.0, s_max * cfg.v_th);
            NeuronLayerState s = NeuronLayerState::zeros({1});
            Tensor drive({1}, {x});
            double total = 0.0;
            for (int t = 0; t < big_t; ++t) {
                auto [s2, spikes] = step(std::move(s), drive, cfg);
                s = std::move(s2);
                total += cfg.format.value_of(spikes.codes[0]);
            }
            const double rate = total / big_t;
            CHECK(std::abs(rate * cfg.v_th - x) <= s_max * cfg.v_th / big_t);
        }
    }
}

TEST_CASE("bit_decompose recomposition is exact over the whole code set") {
    for (BitFormat fmt : {BitFormat{1, 0}, BitFormat{2, 1}, BitFormat{1, 3}, BitFormat{4, 4}}) {
        const int n = fmt.code_count();
        SpikeTensor s = SpikeTensor::zeros({n}, fmt);
        for (int c = 0; c < n; ++c) s.codes[static_cast<std::size_t>(c)] = c;
        auto planes = bit_decompose(s);
        CHECK(static_cast<int>(planes.size()) == fmt.total_bits());
        CHECK(planes.front().weight == std::exp2(fmt.int_bits - 1));
        CHECK(planes.back().weight == std::exp2(-fmt.frac_bits));
        Tensor sum({n});
        for (const auto& p : planes)
            for (int i = 0; i < n; ++i) sum[i] += p.weight * p.bits[i];
        Tensor vals = s.values();
        for (int i = 0; i < n; ++i) CHECK(sum[i] == vals[i]);
    }
}

TEST_CASE("bit_decompose example code 6 at (2,1)") {
    SpikeTensor s = SpikeTensor::zeros({1}, {2, 1});
    s.codes[0] = 6;
    auto planes = bit_decompose(s);
    CHECK(planes[0].weight == 2.0);
    CHECK(planes[0].bits[0] == 1.0);
    CHECK(planes[1].weight == 1.0);
    CHECK(planes[1].bits[0] == 1.0);
    CHECK(planes[2].weight == 0.5);
    CHECK(planes[2].bits[0] == 0.0);
}
