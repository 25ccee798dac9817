// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exits nonzero on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mbsnn/cli.hpp"
#include "mbsnn/convert.hpp"
#include "mbsnn/entropy.hpp"
#include "mbsnn/grad_ops.hpp"
#include "mbsnn/model_io.hpp"
#include "mbsnn/network.hpp"
#include "mbsnn/rng.hpp"
#include "mbsnn/train.hpp"

using namespace mbsnn;

namespace {

int g_failures = 0;

void report(int index, const char* name, bool pass, const std::string& details) {
    std::printf("criterion %2d %s  %s%s%s\n", index, pass ? "PASS" : "FAIL", name,
                details.empty() ? "" : " | ", details.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void run_criterion(int index, const char* name,
                   const std::function<std::pair<bool, std::string>()>& body) {
    try {
        auto [pass, details] = body();
        report(index, name, pass, details);
    } catch (const std::exception& e) {
        report(index, name, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(double v, int prec = 4) { return cli::format_number(v, prec); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MBSNN_CLI_PATH) + " " + args;
    const int status = std::system(cmd.c_str());
    return status == -1 ? -1 : WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<unreadable:" + path + ">";
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double std = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
    return t;
}

Conv2dParams random_conv(int out_c, int in_c, int k, int stride, int padding, Rng& rng) {
    Conv2dParams p;
    p.weights = random_tensor({out_c, in_c, k, k}, rng, 0.4);
    p.bias = random_tensor({out_c}, rng, 0.1);
    p.stride = stride;
    p.padding = padding;
    return p;
}

BatchNormParams random_bn(int c, Rng& rng) {
    BatchNormParams bn;
    bn.gamma = random_tensor({c}, rng, 0.3);
    bn.beta = random_tensor({c}, rng, 0.2);
    bn.running_mean = random_tensor({c}, rng, 0.2);
    bn.running_var = Tensor({c});
    for (int i = 0; i < c; ++i) {
        bn.gamma[i] += 1.0;
        bn.running_var[i] = 0.2 + std::abs(rng.normal());
    }
    bn.epsilon = 1e-5;
    return bn;
}

SpikeTensor random_spikes(std::vector<int> shape, BitFormat fmt, Rng& rng, double p_zero) {
    SpikeTensor s = SpikeTensor::zeros(std::move(shape), fmt);
    for (auto& c : s.codes)
        if (rng.uniform() >= p_zero)
            c = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(fmt.max_code()) + 1));
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// --------------------------------------------------------------------------

std::pair<bool, std::string> entropy_anchor() {
    const std::string path = "acc_entropy.csv";
    if (run_cli("entropy --vth 0.6 --int-bits 1 --frac-bits 0 --out " + path) != 0)
        return {false, "cli invocation failed"};
    const std::string text = slurp(path);
    std::remove(path.c_str());
    // second line: 1+0,<H>,,<loss>
    const auto nl = text.find('\n');
    const auto row = text.substr(nl + 1);
    const auto c1 = row.find(',');
    const double h = std::stod(row.substr(c1 + 1));
    const double delta = std::abs(h - 0.848);
    return {delta <= 0.001, "H=" + fmt(h, 6) + " |H-0.848|=" + fmt(delta, 6) + " <= 0.001"};
}

std::pair<bool, std::string> entropy_ordering() {
    const MembraneDist std_normal{};
    const double v_th = 0.6;
    const std::vector<BitFormat> formats = {{1, 0}, {2, 0}, {1, 1}, {2, 1}};
    const std::vector<double> published = {0.848, 1.149, 1.361, 1.998};
    std::vector<double> analytic;
    bool ok = true;
    std::ostringstream details;
    for (const BitFormat f : formats)
        analytic.push_back(entropy_of_pmf(spike_pmf_analytic(std_normal, v_th, f)));
    for (std::size_t i = 1; i < analytic.size(); ++i) ok = ok && analytic[i] > analytic[i - 1];
    details << "H=[";
    for (std::size_t i = 0; i < analytic.size(); ++i)
        details << (i ? " " : "") << fmt(analytic[i]);
    details << "] ordering " << (ok ? "matches" : "VIOLATES") << " the published 0.848<1.149<1.361<1.998;";
    // larger three deviate from the printed table under our stated binning
    details << " printed-value deviations [";
    for (std::size_t i = 0; i < analytic.size(); ++i)
        details << (i ? " " : "") << fmt(analytic[i] - published[i]);
    details << "];";

    double worst_mc = 0.0;
    for (const BitFormat f : formats) {
        const double h = entropy_of_pmf(spike_pmf_analytic(std_normal, v_th, f));
        const double h_mc =
            entropy_of_pmf(spike_pmf_mc(std_normal, v_th, f, 10'000'000, 20240601));
        worst_mc = std::max(worst_mc, std::abs(h - h_mc));
    }
    ok = ok && worst_mc <= 0.005;
    details << " max |analytic-MC(1e7)|=" << fmt(worst_mc, 5) << " <= 0.005";
    return {ok, details.str()};
}

std::pair<bool, std::string> quantizer_conformance() {
    const double v_th = 0.6;
    NeuronConfig c20;
    c20.v_th = v_th;
    c20.format = {2, 0};
    NeuronConfig c11;
    c11.v_th = v_th;
    c11.format = {1, 1};
    NeuronConfig c10;
    c10.v_th = v_th;
    c10.format = {1, 0};

    const int grid = 100000;
    const double lo = -0.5, hi = 2.5;
    std::vector<int> hits20(4, 0), hits11(4, 0);
    bool ok = true;
    for (int i = 0; i < grid; ++i) {
        const double u = lo + (hi - lo) * static_cast<double>(i) / (grid - 1);
        const double r = u / v_th;
        Tensor ut({1}, {u});

        // published 2-integer-bit table
        double want20;
        if (r >= 3.0)
            want20 = 3.0;
        else if (r >= 2.0)
            want20 = 2.0;
        else if (r >= 1.0)
            want20 = 1.0;
        else
            want20 = 0.0;
        SpikeTensor s20 = fire_quantize(ut, c20);
        ok = ok && (s20.format.value_of(s20.codes[0]) == want20);
        ++hits20[static_cast<std::size_t>(want20)];

        // one-fractional-bit table; the value-1 interval read as [1, 1.5)
        double want11;
        if (r >= 1.5)
            want11 = 1.5;
        else if (r >= 1.0)
            want11 = 1.0;
        else if (r >= 0.5)
            want11 = 0.5;
        else
            want11 = 0.0;
        SpikeTensor s11 = fire_quantize(ut, c11);
        ok = ok && (s11.format.value_of(s11.codes[0]) == want11);
        ++hits11[static_cast<std::size_t>(want11 * 2.0)];

        // binary reduction
        SpikeTensor s10 = fire_quantize(ut, c10);
        ok = ok && (s10.format.value_of(s10.codes[0]) == (u >= v_th ? 1.0 : 0.0));
    }
    for (int b = 0; b < 4; ++b) ok = ok && hits20[static_cast<std::size_t>(b)] > 0 &&
                                      hits11[static_cast<std::size_t>(b)] > 0;
    return {ok, "100000-point grid, every branch of both published tables exercised"};
}

std::pair<bool, std::string> accumulate_only() {
    Rng rng(404);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Conv2dParams conv = random_conv(3, 2, 3, 1, 1, rng);
        SpikeTensor s = random_spikes({1, 2, 7, 7}, {2, 1}, rng, 0.5);
        worst = std::max(worst,
                         max_abs_diff(spiking_conv2d_accumulate(s, conv), conv2d(s.values(), conv)));
    }
    bool ok = worst <= 1e-9;

    // a traced run: every spike-fed conv reports zero MACs
    NeuronConfig n;
    n.format = {2, 1};
    Network net = Network::build(make_resnet8_slim_spec(1, 9, 4, n, 2), 3);
    Tensor x = random_tensor({1, 1, 9, 9}, rng);
    TraceOptions opts;
    opts.record_spikes = true;
    OpReport rep = count_ops(net.forward_timesteps(x, opts).trace);
    int spiking_rows = 0;
    for (const auto& row : rep.rows) {
        const bool spike_fed = row.ac_ops > 0 || (row.mac_ops == 0);
        if (spike_fed) {
            ++spiking_rows;
            ok = ok && row.mac_ops == 0;
        }
    }
    return {ok, "max two-path diff=" + fmt(worst, 12) + " <= 1e-9 over 100 pairs; " +
                    std::to_string(spiking_rows) + " spiking rows all report mac_ops=0"};
}

std::pair<bool, std::string> interlaminar_transcript() {
    Rng rng(42);
    InterlaminarBlock block;
    block.conv1 = random_conv(4, 4, 3, 1, 1, rng);
    block.bn1 = random_bn(4, rng);
    block.conv2 = random_conv(4, 4, 3, 1, 1, rng);
    block.bn2 = random_bn(4, rng);
    block.fuse_conv = random_conv(4, 8, 1, 1, 0, rng);
    block.fuse_bn = random_bn(4, rng);
    block.eca_kernel = random_tensor({3}, rng, 0.5);
    block.neuron.v_th = 0.6;
    block.neuron.tau = 4.0;
    block.neuron.format = {2, 1};

    BlockState state;
    NeuronLayerState u_mid = NeuronLayerState::zeros({1, 4, 5, 5});
    NeuronLayerState u_out = NeuronLayerState::zeros({1, 4, 5, 5});
    double worst = 0.0;
    bool ok = true;
    for (int t = 0; t < 6; ++t) {
        SpikeTensor x = random_spikes({1, 4, 5, 5}, block.neuron.format, rng, 0.4);
        SpikeTensor got = interlaminar_forward(x, block, state);

        Tensor xv = x.values();
        Tensor x_pre = batchnorm_apply(conv2d(xv, block.conv1), block.bn1);
        u_mid = charge(std::move(u_mid), x_pre, block.neuron);
        SpikeTensor s = fire_quantize(u_mid.u, block.neuron);
        u_mid = reset(std::move(u_mid), s, block.neuron);
        Tensor x_post = batchnorm_apply(conv2d(s.values(), block.conv2), block.bn2);
        Tensor x_re =
            batchnorm_apply(conv2d(concat_channels(x_pre, x_post), block.fuse_conv), block.fuse_bn);
        x_re = apply_eca(x_re, block.eca_kernel);
        Tensor drive(x_post.shape());
        for (std::int64_t i = 0; i < drive.size(); ++i) drive[i] = x_post[i] + xv[i] + x_re[i];
        u_out = charge(std::move(u_out), drive, block.neuron);
        SpikeTensor want = fire_quantize(u_out.u, block.neuron);
        u_out = reset(std::move(u_out), want, block.neuron);

        ok = ok && got.codes == want.codes;
        worst = std::max(worst, max_abs_diff(got.values(), want.values()));
    }

    // ablation: zeroed fuse path equals the plain residual block
    InterlaminarBlock plain = block;
    plain.fuse_conv.weights.fill(0.0);
    plain.fuse_conv.bias.fill(0.0);
    plain.fuse_bn.running_mean.fill(0.0);
    plain.fuse_bn.beta.fill(0.0);
    BlockState st2;
    NeuronLayerState pm = NeuronLayerState::zeros({1, 4, 5, 5});
    NeuronLayerState po = NeuronLayerState::zeros({1, 4, 5, 5});
    for (int t = 0; t < 4; ++t) {
        SpikeTensor x = random_spikes({1, 4, 5, 5}, plain.neuron.format, rng, 0.4);
        SpikeTensor got = interlaminar_forward(x, plain, st2);
        Tensor xv = x.values();
        Tensor x_pre = batchnorm_apply(conv2d(xv, plain.conv1), plain.bn1);
        pm = charge(std::move(pm), x_pre, plain.neuron);
        SpikeTensor s = fire_quantize(pm.u, plain.neuron);
        pm = reset(std::move(pm), s, plain.neuron);
        Tensor x_post = batchnorm_apply(conv2d(s.values(), plain.conv2), plain.bn2);
        Tensor drive(x_post.shape());
        for (std::int64_t i = 0; i < drive.size(); ++i) drive[i] = x_post[i] + xv[i];
        po = charge(std::move(po), drive, plain.neuron);
        SpikeTensor want = fire_quantize(po.u, plain.neuron);
        po = reset(std::move(po), want, plain.neuron);
        ok = ok && got.codes == want.codes;
    }
    return {ok && worst <= 1e-9,
            "transcript max diff=" + fmt(worst, 12) + " <= 1e-9; fuse-ablated block equals plain block"};
}

struct FdResult {
    double worst = 0.0;
    bool ok = true;
};

void fd_check(Tensor& param, const Tensor& analytic, const std::function<double()>& loss_fn,
              FdResult& res) {
    const double h = 1e-4;
    for (std::int64_t i = 0; i < param.size(); ++i) {
        const double keep = param[i];
        param[i] = keep + h;
        const double up = loss_fn();
        param[i] = keep - h;
        const double down = loss_fn();
        param[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1.0});
        const double rel = std::abs(fd - analytic[i]) / denom;
        res.worst = std::max(res.worst, rel);
        res.ok = res.ok && rel <= 1e-4;
    }
}

std::pair<bool, std::string> gradient_checks() {
    Rng rng(777);
    FdResult res;

    auto wsum = [](const Tensor& y, const Tensor& w) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < y.size(); ++i) acc += y[i] * w[i];
        return acc;
    };

    {  // conv2d
        Tensor x = random_tensor({2, 2, 5, 5}, rng);
        Conv2dParams p = random_conv(3, 2, 3, 1, 1, rng);
        Tensor dir = random_tensor({2, 3, 5, 5}, rng);
        auto loss = [&]() { return wsum(conv2d(x, p), dir); };
        ConvGrads g = conv2d_backward(x, p, dir);
        fd_check(x, g.input, loss, res);
        fd_check(p.weights, g.weights, loss, res);
        fd_check(p.bias, g.bias, loss, res);
    }
    {  // conv1d
        Tensor x = random_tensor({2, 1, 6}, rng);
        Tensor k = random_tensor({3}, rng);
        Tensor dir = random_tensor({2, 1, 6}, rng);
        auto loss = [&]() { return wsum(conv1d(x, k, 1), dir); };
        Conv1dGrads g = conv1d_backward(x, k, 1, dir);
        fd_check(x, g.input, loss, res);
        fd_check(k, g.kernel, loss, res);
    }
    {  // batchnorm (training statistics)
        Tensor x = random_tensor({3, 2, 4, 4}, rng);
        Tensor gamma = random_tensor({2}, rng, 0.3);
        gamma[0] += 1.0;
        gamma[1] += 1.0;
        Tensor beta = random_tensor({2}, rng, 0.3);
        Tensor dir = random_tensor({3, 2, 4, 4}, rng);
        auto loss = [&]() {
            return wsum(batchnorm_train_forward(x, gamma, beta, 1e-5, nullptr), dir);
        };
        BatchNormCache cache;
        batchnorm_train_forward(x, gamma, beta, 1e-5, &cache);
        BatchNormGrads g = batchnorm_train_backward(cache, dir);
        fd_check(x, g.input, loss, res);
        fd_check(gamma, g.gamma, loss, res);
        fd_check(beta, g.beta, loss, res);
    }
    {  // eca
        Tensor x = random_tensor({2, 4, 3, 3}, rng);
        Tensor k = random_tensor({3}, rng, 0.5);
        Tensor dir = random_tensor({2, 4, 3, 3}, rng);
        auto loss = [&]() { return wsum(eca_forward(x, k, nullptr), dir); };
        EcaCache cache;
        eca_forward(x, k, &cache);
        EcaGrads g = eca_backward(cache, dir);
        fd_check(x, g.input, loss, res);
        fd_check(k, g.kernel, loss, res);
    }
    {  // linear
        Tensor x = random_tensor({3, 5}, rng);
        Tensor w = random_tensor({2, 5}, rng, 0.5);
        Tensor b = random_tensor({2}, rng, 0.2);
        Tensor dir = random_tensor({3, 2}, rng);
        auto loss = [&]() { return wsum(linear(x, w, b), dir); };
        LinearGrads g = linear_backward(x, w, dir);
        fd_check(x, g.input, loss, res);
        fd_check(w, g.weights, loss, res);
        fd_check(b, g.bias, loss, res);
    }
    {  // readout: per-step linear averaged over time slices
        const int t_steps = 3, batch = 2, feat = 4, classes = 3;
        Tensor x = random_tensor({t_steps * batch, feat}, rng);
        Tensor w = random_tensor({classes, feat}, rng, 0.5);
        Tensor b = random_tensor({classes}, rng, 0.2);
        Tensor dir = random_tensor({batch, classes}, rng);
        auto loss = [&]() {
            Tensor z = linear(x, w, b);
            double acc = 0.0;
            for (int t = 0; t < t_steps; ++t)
                for (int n = 0; n < batch; ++n)
                    for (int c = 0; c < classes; ++c)
                        acc += z(t * batch + n, c) / t_steps * dir(n, c);
            return acc;
        };
        Tensor dz({t_steps * batch, classes});
        for (int t = 0; t < t_steps; ++t)
            for (int n = 0; n < batch; ++n)
                for (int c = 0; c < classes; ++c) dz(t * batch + n, c) = dir(n, c) / t_steps;
        LinearGrads g = linear_backward(x, w, dz);
        fd_check(x, g.input, loss, res);
        fd_check(w, g.weights, loss, res);
        fd_check(b, g.bias, loss, res);
    }
    return {res.ok, "conv2d, conv1d, batchnorm, eca, linear, readout; worst relative error=" +
                        fmt(res.worst, 8) + " <= 1e-4"};
}

std::pair<bool, std::string> rate_convergence() {
    bool ok = true;
    double worst_margin = 1.0;
    for (const BitFormat fmt_ : {BitFormat{1, 0}, BitFormat{1, 3}, BitFormat{2, 1}}) {
        NeuronConfig cfg;
        cfg.v_th = 0.6;
        cfg.leak = LeakMode::none;
        cfg.reset_mode = ResetMode::subtract;
        cfg.format = fmt_;
        const double s_max = fmt_.max_value();
        for (double u0 : {0.0, cfg.v_th * fmt_.scale() / 2.0}) {
            for (int t_steps : {4, 16, 64, 128}) {
                for (int gi = 0; gi <= 24; ++gi) {
                    const double x = s_max * cfg.v_th * gi / 24.0;
                    NeuronLayerState st = NeuronLayerState::zeros({1});
                    st.u[0] = u0;
                    double total = 0.0;
                    Tensor drive({1}, {x});
                    for (int t = 0; t < t_steps; ++t) {
                        auto [st2, spikes] = step(std::move(st), drive, cfg);
                        st = std::move(st2);
                        total += cfg.format.value_of(spikes.codes[0]);
                    }
                    const double err = std::abs(total / t_steps * cfg.v_th - x);
                    const double bound = s_max * cfg.v_th / t_steps;
                    ok = ok && err <= bound;
                    worst_margin = std::min(worst_margin, bound - err);
                }
            }
        }
    }
    return {ok, "|mean(s)*v_th - x| <= s_max*v_th/T over T in {4,16,64,128}, 25-point drive grid, "
                "formats (1,0),(1,3),(2,1), both start charges; smallest slack=" +
                    fmt(worst_margin, 6)};
}

std::pair<bool, std::string> desk_training() {
    // gaussian blobs, 4 classes, 2000 samples, format (2,1), T=4
    NeuronConfig n;
    n.format = {2, 1};
    n.v_th = 0.6;
    n.tau = 4.0;
    NetworkSpec spec = make_resnet8_slim_spec(1, 9, 4, n, 4);
    Dataset all = gen_synthetic_dataset(SyntheticKind::gaussian_blobs, 2000, 4, 1);
    auto [train_set, test_set] = split_train_test(all, 0.25, 2);
    TrainableNetwork net = TrainableNetwork::build(spec, 1);
    TrainConfig cfg;
    cfg.epochs = 30;
    SurrogateConfig s_cfg;
    auto history = train_network(net, train_set, test_set, cfg, s_cfg, 0.95);
    const double best = history.back().train_accuracy;
    bool ok = best >= 0.95;
    std::ostringstream details;
    details << "blobs train acc " << fmt(best) << " >= 0.95 after " << history.size()
            << " epoch(s);";

    // two_spirals: mean test accuracy over 5 seeds, (2,1) vs (1,0)
    double mean21 = 0.0, mean10 = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (const BitFormat f : {BitFormat{2, 1}, BitFormat{1, 0}}) {
            NeuronConfig nn;
            nn.format = f;
            NetworkSpec mlp = make_spiral_mlp_spec(2, 48, 2, nn, 4);
            Dataset sp = gen_synthetic_dataset(SyntheticKind::two_spirals, 1000, 2, 100 + seed);
            auto [tr, te] = split_train_test(sp, 0.3, 7 + seed);
            TrainableNetwork mnet = TrainableNetwork::build(mlp, seed);
            TrainConfig mcfg;
            mcfg.epochs = 40;
            mcfg.batch_size = 32;
            mcfg.seed = seed;
            auto h = train_network(mnet, tr, te, mcfg, s_cfg);
            (f == BitFormat{2, 1} ? mean21 : mean10) += h.back().test_accuracy / 5.0;
        }
    }
    ok = ok && mean21 >= mean10;
    details << " spirals mean test acc over 5 seeds: (2,1)=" << fmt(mean21)
            << " >= (1,0)=" << fmt(mean10);
    return {ok, details.str()};
}

std::pair<bool, std::string> conversion_trend() {
    const std::vector<int> ts = {4, 16, 64, 128};
    double mb_smallest = 0.0, if_smallest = 0.0;
    bool ok = true;
    std::ostringstream details;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticOptions opts;
        opts.separation = 0.6;
        opts.noise = 0.55;
        Dataset all = gen_synthetic_dataset(SyntheticKind::gaussian_blobs, 1400, 4, 300 + seed, opts);
        auto [tr, te] = split_train_test(all, 0.3, 40 + seed);
        NetworkSpec spec = make_desk_cnn_ann_spec(1, 9, 4);
        TrainConfig cfg;
        cfg.epochs = 8;
        cfg.lr = 0.05;
        cfg.seed = seed;
        Network ann = train_ann(spec, tr, cfg, seed);
        const double ann_acc = evaluate(ann, te);
        CalibrationPolicy policy;
        const std::vector<double> th = calibrate_thresholds(ann, policy, tr);
        const auto mb = evaluate_tsweep(convert_ann_to_snn(ann, th, {1, 3}), te, ts);
        const auto bi = evaluate_tsweep(convert_ann_to_snn(ann, th, {1, 0}), te, ts);
        for (std::size_t i = 0; i < ts.size(); ++i)
            ok = ok && mb[i].second >= bi[i].second - 0.005;
        ok = ok && mb.back().second >= ann_acc - 0.01 && bi.back().second >= ann_acc - 0.01;
        mb_smallest += mb.front().second / 5.0;
        if_smallest += bi.front().second / 5.0;
    }
    ok = ok && mb_smallest > if_smallest;
    details << "MBIF(1,3) >= IF(1,0)-0.5% at every swept T on 5 seeds; mean accuracy at T=4: "
            << "MBIF " << fmt(mb_smallest) << " > IF " << fmt(if_smallest)
            << "; both within 1% of the ANN at T=128";
    return {ok, details.str()};
}

std::pair<bool, std::string> determinism_and_formats() {
    bool ok = true;
    std::ostringstream details;

    // entropy: byte-identical reruns
    ok = ok && run_cli("entropy --table1 --mc-samples 200000 --seed 5 --out acc_d1.csv") == 0;
    ok = ok && run_cli("entropy --table1 --mc-samples 200000 --seed 5 --out acc_d2.csv") == 0;
    ok = ok && slurp("acc_d1.csv") == slurp("acc_d2.csv");

    // train: byte-identical model and log
    spit("acc_cfg.json", R"({
        "model": {"preset": "spiral_mlp", "hidden": 16,
                  "neuron": {"int_bits": 2, "frac_bits": 1}},
        "train": {"lr": 0.1, "batch_size": 25, "epochs": 2, "time_steps": 4, "seed": 11},
        "dataset": {"kind": "two_spirals", "n": 120, "classes": 2, "seed": 4}
    })");
    ok = ok && run_cli("train --config acc_cfg.json --out-model acc_m1.bin --log acc_l1.csv "
                       "> /dev/null") == 0;
    ok = ok && run_cli("train --config acc_cfg.json --out-model acc_m2.bin --log acc_l2.csv "
                       "> /dev/null") == 0;
    ok = ok && slurp("acc_m1.bin") == slurp("acc_m2.bin") && slurp("acc_l1.csv") == slurp("acc_l2.csv");
    details << "entropy/train reruns byte-identical;";

    // model file: save -> load -> save byte-identical
    {
        Network loaded = load_model("acc_m1.bin");
        save_model("acc_m3.bin", loaded);
        ok = ok && slurp("acc_m1.bin") == slurp("acc_m3.bin");
        details << " model save/load/save byte-identical;";
    }

    // convert: byte-identical sweep CSVs
    spit("acc_ann_cfg.json", R"({
        "model": {"preset": "desk_mlp_ann", "hidden": 12},
        "train": {"lr": 0.05, "batch_size": 32, "epochs": 3, "seed": 5},
        "dataset": {"kind": "gaussian_blobs", "n": 240, "classes": 4, "seed": 6,
                    "blob_shape": [1, 5, 5]}
    })");
    ok = ok && run_cli("train --config acc_ann_cfg.json --out-model acc_ann.bin > /dev/null") == 0;
    ok = ok && run_cli("convert --ann-model acc_ann.bin --config acc_ann_cfg.json "
                       "--tsweep 2,8 --out acc_s1.csv") == 0;
    ok = ok && run_cli("convert --ann-model acc_ann.bin --config acc_ann_cfg.json "
                       "--tsweep 2,8 --out acc_s2.csv") == 0;
    ok = ok && slurp("acc_s1.csv") == slurp("acc_s2.csv");

    // simulate: byte-identical raster and op counts
    {
        Tensor imgs({2, 1, 9, 9});
        Rng rng(12);
        for (std::int64_t i = 0; i < imgs.size(); ++i) imgs[i] = rng.uniform();
        write_idx_images("acc_sim.idx", imgs);
        NeuronConfig n;
        n.format = {2, 1};
        Network net = Network::build(make_resnet8_slim_spec(1, 9, 4, n, 2), 9);
        save_model("acc_snn.bin", net);
        ok = ok && run_cli("simulate --model acc_snn.bin --input acc_sim.idx "
                           "--export-raster acc_r1.csv --count-ops acc_o1.csv > /dev/null") == 0;
        ok = ok && run_cli("simulate --model acc_snn.bin --input acc_sim.idx "
                           "--export-raster acc_r2.csv --count-ops acc_o2.csv > /dev/null") == 0;
        ok = ok && slurp("acc_r1.csv") == slurp("acc_r2.csv") &&
             slurp("acc_o1.csv") == slurp("acc_o2.csv");
        details << " convert/simulate reruns byte-identical;";
    }

    // idx round trip
    {
        Rng rng(5);
        Tensor imgs({3, 1, 4, 4});
        for (std::int64_t i = 0; i < imgs.size(); ++i) imgs[i] = rng.uniform();
        write_idx_images("acc_idx1.bin", imgs);
        Tensor loaded = load_idx_images("acc_idx1.bin");
        write_idx_images("acc_idx2.bin", loaded);
        ok = ok && slurp("acc_idx1.bin") == slurp("acc_idx2.bin");
        details << " idx loader round-trips bytes";
    }

    for (const char* f :
         {"acc_d1.csv", "acc_d2.csv", "acc_cfg.json", "acc_m1.bin", "acc_m2.bin", "acc_m3.bin",
          "acc_l1.csv", "acc_l2.csv", "acc_ann_cfg.json", "acc_ann.bin", "acc_s1.csv",
          "acc_s2.csv", "acc_sim.idx", "acc_snn.bin", "acc_r1.csv", "acc_r2.csv", "acc_o1.csv",
          "acc_o2.csv", "acc_idx1.bin", "acc_idx2.bin"})
        std::remove(f);
    return {ok, details.str()};
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    run_criterion(1, "entropy anchor (binary H at v_th 0.6)", entropy_anchor);
    run_criterion(2, "entropy ordering and Monte-Carlo agreement", entropy_ordering);
    run_criterion(3, "quantizer branch conformance", quantizer_conformance);
    run_criterion(4, "accumulate-only equivalence and op counting", accumulate_only);
    run_criterion(5, "interlaminar block transcript and ablation", interlaminar_transcript);
    run_criterion(6, "finite-difference gradient checks", gradient_checks);
    run_criterion(7, "rate-convergence bound", rate_convergence);
    run_criterion(8, "desk-scale direct training", desk_training);
    run_criterion(9, "conversion trend across time steps", conversion_trend);
    run_criterion(10, "determinism and file formats", determinism_and_formats);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d/10 criteria passed in %.1f s\n", 10 - g_failures, elapsed);
    return g_failures == 0 ? 0 : 1;
}
