#include "support/properties.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <cstring>
#include <sstream>

#include "resmamba/autoencoder.hpp"
#include "resmamba/bench.hpp"
#include "resmamba/checkpoint.hpp"
#include "resmamba/classifier.hpp"
#include "resmamba/config.hpp"
#include "resmamba/dataset.hpp"
#include "resmamba/gradcheck.hpp"
#include "resmamba/metrics.hpp"
#include "resmamba/ops.hpp"
#include "resmamba/scan.hpp"
#include "resmamba/tsmamba.hpp"
#include "support/oracles.hpp"

namespace rmb::testing {

namespace {

using Outcome = std::optional<std::string>;

template <class... Args>
std::string describe(const Args&... args)
{
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

ScanView view_of(const ScanCase& s) { return {s.length, s.channels, s.state, s.u, s.delta, s.a, s.b, s.c, s.d_skip}; }

// ---- numeric-core ---------------------------------------------------------

Outcome conv_matches_naive(Rng& rng)
{
    const std::size_t k = pick(rng, 1, 4), stride = pick(rng, 1, 3), pad = rng.below(k);
    const std::size_t h = pick(rng, k, 9), w = pick(rng, k, 9);
    const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), h, w}, ws{pick(rng, 1, 4), xs[1], k, k};
    const Tensor x = random_tensor(rng, xs), wt = random_tensor(rng, ws);
    const bool with_bias = rng.below(2) == 1;
    const Tensor bias = with_bias ? random_tensor(rng, {ws[0]}) : Tensor();
    const Tensor y = conv2d(x, wt, bias, stride, pad);
    Shape expected_shape;
    const auto expected = naive_conv2d(std::vector<double>(x.values().begin(), x.values().end()), xs,
                                       std::vector<double>(wt.values().begin(), wt.values().end()), ws,
                                       with_bias ? std::vector<double>(bias.values().begin(), bias.values().end())
                                                 : std::vector<double>{},
                                       stride, pad, expected_shape);
    if (y.shape() != expected_shape) return describe("shape ", shape_to_string(y.shape()));
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (y.values()[i] != expected[i]) return describe("element ", i, " differs: ", y.values()[i], " vs ", expected[i]);
    }
    return std::nullopt;
}

Outcome softmax_rows_sum_to_one(Rng& rng)
{
    const std::size_t rows = pick(rng, 1, 6), cols = pick(rng, 1, 12);
    const Tensor x = random_tensor(rng, {rows, cols}, -30.0, 30.0);
    const Tensor out = softmax_lastaxis(x);
    const auto y = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += y[r * cols + j];
        if (std::abs(s - 1.0) > 1e-12) return describe("row ", r, " sums to ", s);
    }
    return std::nullopt;
}

Outcome layernorm_zero_mean(Rng& rng)
{
    const std::size_t rows = pick(rng, 1, 5), dim = pick(rng, 2, 16);
    const Tensor x = random_tensor(rng, {rows, dim}, -50.0, 50.0);
    const Tensor out = layernorm(x, Tensor::full({dim}, 1.0), Tensor::zeros({dim}));
    const auto y = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t j = 0; j < dim; ++j) mean += y[r * dim + j];
        mean /= static_cast<double>(dim);
        if (std::abs(mean) > 1e-10) return describe("row ", r, " mean ", mean);
    }
    return std::nullopt;
}

}  // namespace

OpCase make_op_case(Rng& rng, std::size_t kind)
{
    const auto r = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(rng, std::move(s), lo, hi, true); };
    // Fixed random weights turn any output into a scalar with a non-trivial gradient.
    const auto weighted = [](const Tensor& y, const Tensor& probe) { return sum(mul(y, probe)); };
    const auto probe_like = [&](const Shape& s) { return random_tensor(rng, s); };
    OpCase c;
    switch (kind) {
    case 0: {
        c.name = "matmul";
        const std::size_t m = pick(rng, 1, 3), k = pick(rng, 1, 4), n = pick(rng, 1, 3);
        c.inputs = {r({m, k}), r({k, n})};
        const Tensor p = probe_like({m, n});
        c.loss = [in = c.inputs, p, weighted] { return weighted(matmul(in[0], in[1]), p); };
        break;
    }
    case 1: {
        c.name = "conv2d";
        const std::size_t k = pick(rng, 1, 3), s = pick(rng, 1, 2);
        const std::size_t h = pick(rng, k, 5);
        c.inputs = {r({1, pick(rng, 1, 2), h, h}), Tensor(), r({pick(rng, 1, 2)})};
        c.inputs[1] = r({c.inputs[2].size(0), c.inputs[0].size(1), k, k});
        const std::size_t pad = rng.below(k);
        const Tensor probe = probe_like(conv2d(c.inputs[0], c.inputs[1], c.inputs[2], s, pad).shape());
        c.loss = [in = c.inputs, probe, s, pad, weighted] { return weighted(conv2d(in[0], in[1], in[2], s, pad), probe); };
        break;
    }
    case 2: {
        c.name = "layernorm";
        const std::size_t d = pick(rng, 2, 5);
        c.inputs = {r({pick(rng, 1, 3), d}), r({d}), r({d})};
        const Tensor p = probe_like(c.inputs[0].shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(layernorm(in[0], in[1], in[2]), p); };
        break;
    }
    case 3: {
        c.name = "silu";
        c.inputs = {r({pick(rng, 1, 6)}, -3, 3)};
        const Tensor p = probe_like(c.inputs[0].shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(silu(in[0]), p); };
        break;
    }
    case 4: {
        c.name = "sigmoid";
        c.inputs = {r({pick(rng, 1, 6)}, -3, 3)};
        const Tensor p = probe_like(c.inputs[0].shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(sigmoid(in[0]), p); };
        break;
    }
    case 5: {
        c.name = "softplus";
        c.inputs = {r({pick(rng, 1, 6)}, -3, 3)};
        const Tensor p = probe_like(c.inputs[0].shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(softplus(in[0]), p); };
        break;
    }
    case 6: {
        c.name = "softmax";
        c.inputs = {r({pick(rng, 1, 3), pick(rng, 1, 5)}, -2, 2)};
        const Tensor p = probe_like(c.inputs[0].shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(softmax_lastaxis(in[0]), p); };
        break;
    }
    case 7: {
        c.name = "log_softmax";
        c.inputs = {r({pick(rng, 1, 3), pick(rng, 1, 5)}, -2, 2)};
        const Tensor p = probe_like(c.inputs[0].shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(log_softmax_lastaxis(in[0]), p); };
        break;
    }
    case 8: {
        c.name = "upsample_nearest2x";
        c.inputs = {r({1, pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 3)})};
        const Tensor p = probe_like(upsample_nearest2x(c.inputs[0]).shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(upsample_nearest2x(in[0]), p); };
        break;
    }
    case 9: {
        c.name = "linear";
        const std::size_t k = pick(rng, 1, 4), n = pick(rng, 1, 3);
        c.inputs = {r({pick(rng, 1, 2), pick(rng, 1, 3), k}), r({k, n}), r({n})};
        const Tensor p = probe_like(linear(c.inputs[0], c.inputs[1], c.inputs[2]).shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(linear(in[0], in[1], in[2]), p); };
        break;
    }
    case 10: {
        c.name = "mul_exp";
        const Shape s{pick(rng, 1, 5)};
        c.inputs = {r(s), r(s)};
        c.loss = [in = c.inputs] { return sum(exp(mul(in[0], in[1]))); };
        break;
    }
    case 11: {
        c.name = "mse_loss";
        const Shape s{pick(rng, 1, 6)};
        c.inputs = {r(s), r(s)};
        c.loss = [in = c.inputs] { return mse_loss(in[0], in[1]); };
        break;
    }
    case 12: {
        c.name = "global_avg_pool";
        c.inputs = {r({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)})};
        const Tensor p = probe_like({c.inputs[0].size(0), c.inputs[0].size(1)});
        c.loss = [in = c.inputs, p, weighted] { return weighted(global_avg_pool(in[0]), p); };
        break;
    }
    case 13: {
        c.name = "concat_channels";
        const std::size_t h = pick(rng, 1, 3), w = pick(rng, 1, 3);
        c.inputs = {r({1, pick(rng, 1, 2), h, w}), r({1, pick(rng, 1, 2), h, w})};
        const Tensor p = probe_like(concat_channels(c.inputs[0], c.inputs[1]).shape());
        c.loss = [in = c.inputs, p, weighted] { return weighted(concat_channels(in[0], in[1]), p); };
        break;
    }
    case 14: {
        c.name = "tokens_round_trip";
        const std::size_t h = pick(rng, 1, 3), w = pick(rng, 1, 3);
        c.inputs = {r({1, pick(rng, 1, 3), h, w})};
        const Tensor p = probe_like({1, h * w, c.inputs[0].size(1)});
        c.loss = [in = c.inputs, p, h, w, weighted] {
            return sum(mul(from_tokens(mul(to_tokens(in[0]), p), h, w), in[0]));
        };
        break;
    }
    case 15: {
        c.name = "gather";
        const std::size_t n = pick(rng, 1, 5), m = pick(rng, 1, 7);
        c.inputs = {r({n})};
        std::vector<std::size_t> index(m);
        for (auto& i : index) i = rng.below(n);
        const Tensor p = probe_like({m});
        c.loss = [in = c.inputs, index, p, weighted] { return weighted(gather(in[0], index, {index.size()}), p); };
        break;
    }
    case 16: {
        c.name = "cross_entropy";
        const std::size_t b = pick(rng, 1, 3), k = pick(rng, 2, 4);
        c.inputs = {r({b, k}, -2, 2)};
        std::vector<std::size_t> labels(b);
        for (auto& l : labels) l = rng.below(k);
        c.loss = [in = c.inputs, labels] { return cross_entropy(in[0], labels); };
        break;
    }
    case 17: {
        const bool parallel = rng.below(2) == 1;
        c.name = parallel ? "selective_scan_par" : "selective_scan_seq";
        const std::size_t l = pick(rng, 1, 6), d = pick(rng, 1, 2), n = pick(rng, 1, 3);
        c.inputs = {r({l, d}), r({l, d}, 0.05, 0.5), r({d, n}, -2.0, -0.1), r({l, n}), r({l, n}), r({d})};
        const Tensor p = probe_like({l, d});
        const ScanMode mode = parallel ? ScanMode::Parallel : ScanMode::Sequential;
        c.loss = [in = c.inputs, p, mode, weighted] {
            return weighted(selective_scan(in[0], SSMParams{in[1], in[2], in[3], in[4], in[5]}, mode), p);
        };
        break;
    }
    default: {
        c.name = "relu_scale_sub";
        const Shape s{pick(rng, 1, 6)};
        // Keep inputs away from the kink at zero.
        std::vector<double> v(s[0]);
        for (auto& x : v) x = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
        c.inputs = {Tensor(s, v, true), r(s)};
        c.loss = [in = c.inputs] { return sum(square(sub(scale(relu(in[0]), 1.7), in[1]))); };
        break;
    }
    }
    return c;
}

namespace {

OpCase random_op_case(Rng& rng) { return make_op_case(rng, rng.below(kOpCaseKinds)); }

Outcome op_gradients_match_finite_differences(Rng& rng)
{
    auto c = random_op_case(rng);
    std::vector<Tensor> inputs;
    for (const auto& t : c.inputs) {
        if (t.defined()) inputs.push_back(t);
    }
    const auto result = check_gradients(c.loss, inputs);
    if (!(result.max_rel_error <= 1e-4)) return describe(c.name, ": max rel err ", result.max_rel_error);
    return std::nullopt;
}

Outcome ops_are_pure(Rng& rng)
{
    auto c = random_op_case(rng);
    NoGradGuard no_grad;
    const double first = c.loss().item();
    const double second = c.loss().item();
    if (std::memcmp(&first, &second, sizeof first) != 0) return describe(c.name, ": ", first, " vs ", second);
    return std::nullopt;
}

// ---- ssm-scan ---------------------------------------------------------------

Outcome scan_parallel_equals_sequential(Rng& rng)
{
    const auto length = static_cast<std::size_t>(std::exp(rng.uniform(0.0, std::log(4096.0))));
    const auto s = random_scan_case(rng, std::max<std::size_t>(length, 1), pick(rng, 1, 8), pick(rng, 1, 8));
    std::vector<double> ys(s.length * s.channels), yp(ys.size());
    scan_forward_sequential(view_of(s), ys, {});
    scan_forward_parallel(view_of(s), yp, {});
    double worst = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) worst = std::max(worst, std::abs(ys[i] - yp[i]));
    if (!(worst <= 1e-10)) return describe("L=", s.length, " max abs diff ", worst);
    return std::nullopt;
}

Outcome scan_is_causal(Rng& rng)
{
    auto s = random_scan_case(rng, pick(rng, 2, 64), pick(rng, 1, 4), pick(rng, 1, 4));
    std::vector<double> before(s.length * s.channels), after(before.size());
    scan_forward_parallel(view_of(s), before, {});
    const std::size_t cut = pick(rng, 1, s.length - 1);
    for (std::size_t i = cut * s.channels; i < s.u.size(); ++i) s.u[i] += rng.normal();
    scan_forward_parallel(view_of(s), after, {});
    for (std::size_t i = 0; i < cut * s.channels; ++i) {
        if (before[i] != after[i]) return describe("output ", i, " changed after perturbing steps >= ", cut);
    }
    return std::nullopt;
}

Outcome scan_states_are_bounded(Rng& rng)
{
    const auto s = random_scan_case(rng, pick(rng, 1, 256), pick(rng, 1, 4), pick(rng, 1, 4));
    std::vector<double> y(s.length * s.channels), states(s.length * s.channels * s.state);
    scan_forward_sequential(view_of(s), y, states);
    double max_u = 0.0, max_bbar = 0.0;
    for (double v : s.u) max_u = std::max(max_u, std::abs(v));
    for (std::size_t t = 0; t < s.length; ++t)
        for (std::size_t d = 0; d < s.channels; ++d)
            for (std::size_t n = 0; n < s.state; ++n)
                max_bbar = std::max(max_bbar, std::abs(s.delta[t * s.channels + d] * s.b[t * s.state + n]));
    for (std::size_t t = 0; t < s.length; ++t) {
        const double bound = max_bbar * max_u * static_cast<double>(t + 1) * (1.0 + 1e-12);
        for (std::size_t k = 0; k < s.channels * s.state; ++k) {
            const double h = std::abs(states[t * s.channels * s.state + k]);
            if (!(h <= bound)) return describe("|h_", t, "| = ", h, " exceeds ", bound);
        }
    }
    return std::nullopt;
}

Outcome scan_is_linear_in_u(Rng& rng)
{
    auto s1 = random_scan_case(rng, pick(rng, 1, 128), pick(rng, 1, 4), pick(rng, 1, 4));
    auto s2 = s1;
    for (auto& v : s2.u) v = rng.normal();
    auto mix = s1;
    const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
    for (std::size_t i = 0; i < mix.u.size(); ++i) mix.u[i] = alpha * s1.u[i] + beta * s2.u[i];
    std::vector<double> y1(s1.u.size()), y2(y1.size()), ym(y1.size());
    scan_forward_parallel(view_of(s1), y1, {});
    scan_forward_parallel(view_of(s2), y2, {});
    scan_forward_parallel(view_of(mix), ym, {});
    for (std::size_t i = 0; i < ym.size(); ++i) {
        const double expected = alpha * y1[i] + beta * y2[i];
        const double tol = 1e-9 * (1.0 + std::abs(alpha * y1[i]) + std::abs(beta * y2[i]));
        if (!(std::abs(ym[i] - expected) <= tol)) return describe("element ", i, ": ", ym[i], " vs ", expected);
    }
    return std::nullopt;
}

// ---- tsmamba ----------------------------------------------------------------

Outcome orientation_round_trip(Rng& rng)
{
    const Tensor x = random_tensor(rng, {pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 7), pick(rng, 1, 7)});
    for (auto o : kOrientations) {
        const Tensor back = unflatten_oriented(flatten_oriented(x, o), o, x.size(2), x.size(3));
        if (back.shape() != x.shape()) return describe(orientation_name(o), ": shape changed");
        for (std::size_t i = 0; i < x.numel(); ++i) {
            if (back.values()[i] != x.values()[i]) return describe(orientation_name(o), ": element ", i, " changed");
        }
        const auto order = orientation_order(x.size(2), x.size(3), o);
        if (std::set<std::size_t>(order.begin(), order.end()).size() != order.size()) {
            return describe(orientation_name(o), ": order is not a permutation");
        }
    }
    return std::nullopt;
}

Outcome block_is_identity_at_init(Rng& rng)
{
    const std::size_t c = pick(rng, 1, 4);
    const TSMambaBlock block = TSMambaBlock::create(c, pick(rng, 1, 4), pick(rng, 1, 3), rng);
    const Tensor x = random_tensor(rng, {pick(rng, 1, 2), c, pick(rng, 1, 4), pick(rng, 1, 4)}, -3, 3);
    const Tensor y = block.forward(x, rng.below(2) ? ScanMode::Parallel : ScanMode::Sequential);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (y.values()[i] != x.values()[i]) return describe("element ", i, ": ", y.values()[i], " vs ", x.values()[i]);
    }
    return std::nullopt;
}

TSMambaConfig random_small_config(Rng& rng)
{
    TSMambaConfig cfg;
    cfg.num_layers = pick(rng, 1, 4);
    cfg.widths.clear();
    for (std::size_t i = 0; i < cfg.num_layers; ++i) cfg.widths.push_back(pick(rng, 1, 6));
    cfg.d_state = pick(rng, 1, 4);
    cfg.mlp_ratio = pick(rng, 1, 3);
    const std::size_t unit = std::size_t{1} << cfg.num_layers;
    cfg.image_height = unit * pick(rng, 1, 2);
    cfg.image_width = unit * pick(rng, 1, 2);
    cfg.in_channels = rng.below(2) ? 1 : 3;
    return cfg;
}

Outcome encoder_count_matches_closed_form(Rng& rng)
{
    const auto cfg = random_small_config(rng);
    Rng init(rng.next_u64());
    const TSMambaEncoder encoder(cfg, init);
    NamedParameters params;
    encoder.collect("", params);
    if (count_parameters(params) != encoder_parameter_count(cfg)) {
        return describe("counted ", count_parameters(params), " vs closed form ", encoder_parameter_count(cfg));
    }
    const AEModel ae(cfg, rng.next_u64());
    if (count_parameters(ae.named_parameters()) != autoencoder_parameter_count(cfg)) {
        return describe("autoencoder counted ", count_parameters(ae.named_parameters()), " vs closed form ",
                        autoencoder_parameter_count(cfg));
    }
    return std::nullopt;
}

Outcome autoencoder_preserves_shape(Rng& rng)
{
    const auto cfg = random_small_config(rng);
    const AEModel ae(cfg, rng.next_u64());
    const Tensor x = random_tensor(rng, {pick(rng, 1, 2), cfg.in_channels, cfg.image_height, cfg.image_width}, 0, 1);
    NoGradGuard no_grad;
    const Tensor y = ae.forward(x);
    if (y.shape() != x.shape()) return describe("output ", shape_to_string(y.shape()), " for input ", shape_to_string(x.shape()));
    for (double v : y.values()) {
        if (!(v > 0.0 && v < 1.0)) return describe("output value ", v, " outside (0, 1)");
    }
    return std::nullopt;
}

// ---- metrics ----------------------------------------------------------------

ConfusionMatrix random_confusion(Rng& rng)
{
    const std::size_t c = pick(rng, 2, 6);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < c; ++i) cm.class_names.push_back("c" + std::to_string(i));
    cm.counts.assign(c, std::vector<std::uint64_t>(c, 0));
    const bool sparse = rng.below(3) == 0;
    for (auto& row : cm.counts)
        for (auto& v : row) v = sparse ? (rng.below(3) == 0 ? rng.below(5) : 0) : rng.below(100);
    cm.counts[rng.below(c)][rng.below(c)] += 1;  // never empty
    return cm;
}

Outcome accuracy_is_exact_trace_ratio(Rng& rng)
{
    const auto cm = random_confusion(rng);
    const auto report = kpis(cm);
    if (cm.trace() > cm.total()) return describe("trace exceeds total");
    if (report.accuracy.num != cm.trace() || report.accuracy.den != cm.total()) return describe("accuracy is not trace/total");
    if (report.accuracy.value() != static_cast<double>(cm.trace()) / static_cast<double>(cm.total())) {
        return describe("accuracy float conversion differs");
    }
    return std::nullopt;
}

Outcome micro_recall_equals_accuracy(Rng& rng)
{
    const auto cm = random_confusion(rng);
    std::uint64_t tp = 0, support = 0;
    for (std::size_t c = 0; c < cm.num_classes(); ++c) {
        tp += cm.true_positives(c);
        support += cm.true_positives(c) + cm.false_negatives(c);
    }
    const auto acc = kpis(cm).accuracy;
    // Compare fractions by cross-multiplication.
    if (tp * acc.den != acc.num * support) return describe("micro recall ", tp, "/", support, " vs accuracy ", acc.num, "/", acc.den);
    return std::nullopt;
}

Outcome folding_preserves_counts(Rng& rng)
{
    const auto cm = random_confusion(rng);
    const std::size_t pos = rng.below(cm.num_classes());
    const auto folded = binary_collapse(cm, pos);
    const std::size_t p = cm.num_classes() == 2 ? pos : (pos == 0 ? 0 : 1);
    if (folded.total() != cm.total()) return describe("total ", folded.total(), " vs ", cm.total());
    if (folded.true_positives(p) != cm.true_positives(pos)) return describe("TP changed");
    if (folded.false_negatives(p) != cm.false_negatives(pos)) return describe("FN changed");
    if (folded.false_positives(p) != cm.false_positives(pos)) return describe("FP changed");
    if (folded.class_names[p] != cm.class_names[pos]) return describe("positive class renamed");
    return std::nullopt;
}

Outcome f1_between_precision_and_recall(Rng& rng)
{
    const auto report = kpis(random_confusion(rng));
    for (const auto& c : report.classes) {
        const double p = c.precision.value(), r = c.recall.value(), f = c.f1.value();
        if (p > 0 && r > 0) {
            if (!(f <= std::max(p, r) + 1e-15 && f >= std::min(p, r) - 1e-15)) {
                return describe(c.name, ": f1 ", f, " outside [", std::min(p, r), ", ", std::max(p, r), "]");
            }
            const double harmonic = 2 * p * r / (p + r);
            if (std::abs(harmonic - f) > 1e-12) return describe(c.name, ": f1 ", f, " vs harmonic mean ", harmonic);
        }
    }
    return std::nullopt;
}

Outcome percent_is_truncated_exactly(Rng& rng)
{
    const std::uint64_t den = 1 + rng.below(100000);
    const std::uint64_t num = rng.below(den + 1);
    const std::string text = format_percent({num, den}, 1);
    // Parse "W" or "W.F" back into tenths of a percent.
    const auto dot = text.find('.');
    const std::uint64_t whole = std::stoull(text.substr(0, dot));
    const std::uint64_t tenth = dot == std::string::npos ? 0 : std::stoull(text.substr(dot + 1));
    const std::uint64_t tenths = whole * 10 + tenth;
    // Need tenths <= 1000 * num / den < tenths + 1.
    if (!(tenths * den <= 1000 * num && 1000 * num < (tenths + 1) * den)) return describe(num, "/", den, " -> ", text);
    return std::nullopt;
}

Outcome auc_matches_pairwise_count(Rng& rng)
{
    std::vector<double> pos(pick(rng, 1, 30)), neg(pick(rng, 1, 30));
    const bool coarse = rng.below(2) == 0;  // coarse scores produce ties
    for (auto& v : pos) v = coarse ? static_cast<double>(rng.below(5)) : rng.normal(0.5, 1.0);
    for (auto& v : neg) v = coarse ? static_cast<double>(rng.below(5)) : rng.normal();
    const double got = roc_auc(pos, neg), want = naive_auc(pos, neg);
    if (std::abs(got - want) > 1e-12) return describe("auc ", got, " vs ", want);
    return std::nullopt;
}

// ---- classifier -------------------------------------------------------------

Outcome logits_give_probabilities_and_shift_invariant_argmax(Rng& rng)
{
    const std::size_t rows = pick(rng, 1, 5), k = pick(rng, 2, 6);
    const Tensor logits = random_tensor(rng, {rows, k}, -10, 10);
    const Tensor prob_tensor = softmax_lastaxis(logits);
    const auto probs = prob_tensor.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += probs[r * k + j];
        if (std::abs(s - 1.0) > 1e-9) return describe("row ", r, " sums to ", s);
    }
    std::vector<double> shifted(logits.values().begin(), logits.values().end());
    for (std::size_t r = 0; r < rows; ++r) {
        const double c = rng.uniform(-100, 100);
        for (std::size_t j = 0; j < k; ++j) shifted[r * k + j] += c;
    }
    if (predict(logits) != predict(Tensor(logits.shape(), shifted))) return describe("argmax changed under a shift");
    return std::nullopt;
}

// ---- pipeline ---------------------------------------------------------------

Outcome split_partitions_each_class(Rng& rng)
{
    const std::size_t classes = pick(rng, 1, 5);
    std::vector<std::size_t> labels;
    std::vector<std::size_t> per_class(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        per_class[c] = pick(rng, 2, 40);
        labels.insert(labels.end(), per_class[c], c);
    }
    Rng order(rng.next_u64());
    order.shuffle(labels);
    const SplitSpec spec{rng.uniform(0.05, 0.95), rng.next_u64()};
    const auto [train, val] = split_indices(labels, classes, spec);
    std::vector<std::size_t> all(train);
    all.insert(all.end(), val.begin(), val.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i] != i) return describe("split is not a partition of the indices");
    }
    if (all.size() != labels.size()) return describe("split lost or duplicated items");
    for (std::size_t c = 0; c < classes; ++c) {
        const auto n_train = static_cast<std::size_t>(
            std::count_if(train.begin(), train.end(), [&](std::size_t i) { return labels[i] == c; }));
        const auto floor_count = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(per_class[c]) + 1e-9));
        const std::size_t expected = std::clamp<std::size_t>(floor_count, 1, per_class[c] - 1);
        if (n_train != expected) return describe("class ", c, ": ", n_train, " train items, expected ", expected);
    }
    if (split_indices(labels, classes, spec) != std::make_pair(train, val)) return describe("split is not deterministic");
    return std::nullopt;
}

Outcome checkpoint_round_trip_is_byte_identical(Rng& rng)
{
    Checkpoint ckpt;
    const std::size_t meta = rng.below(4);
    for (std::size_t i = 0; i < meta; ++i) ckpt.set_meta("k" + std::to_string(i), std::string(rng.below(20), 'a' + static_cast<char>(i)));
    const std::size_t tensors = rng.below(5);
    for (std::size_t i = 0; i < tensors; ++i) {
        CheckpointTensor t;
        t.name = "t" + std::to_string(i);
        const std::size_t rank = rng.below(4);
        for (std::size_t r = 0; r < rank; ++r) t.shape.push_back(pick(rng, 1, 4));
        t.values.resize(shape_numel(t.shape));
        for (auto& v : t.values) {
            // Include awkward values: signed zeros, subnormals, infinities.
            switch (rng.below(8)) {
            case 0: v = -0.0; break;
            case 1: v = 4.9e-324; break;
            case 2: v = INFINITY; break;
            default: v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
            }
        }
        ckpt.tensors.push_back(std::move(t));
    }
    const auto bytes = encode_checkpoint(ckpt);
    const auto again = encode_checkpoint(decode_checkpoint(bytes));
    if (bytes != again) return describe("re-encoded bytes differ");
    return std::nullopt;
}

Outcome config_text_round_trips(Rng& rng)
{
    PipelineConfig c = PipelineConfig::for_profile(rng.below(2) ? "full" : "desk");
    c.widths.clear();
    const std::size_t layers = pick(rng, 1, 4);
    for (std::size_t i = 0; i < layers; ++i) c.widths.push_back(pick(rng, 1, 64));
    c.image_size = (std::size_t{1} << layers) * pick(rng, 1, 8);
    c.epochs_ae = rng.below(200);
    c.epochs_clf = rng.below(200);
    c.lr = std::exp(rng.uniform(-14, -1));
    c.lr_clf = std::exp(rng.uniform(-14, -1));
    c.seed = rng.next_u64();
    c.batch = pick(rng, 1, 64);
    c.train_fraction = rng.uniform(0.05, 0.95);
    c.num_classes = pick(rng, 2, 6);
    const PipelineConfig back = parse_config(c.to_text());
    if (back.to_text() != c.to_text()) return describe("config text changed after a round trip");
    return std::nullopt;
}

// ---- bench ------------------------------------------------------------------

Outcome slope_fit_recovers_power_law(Rng& rng)
{
    const double exponent = rng.uniform(0.2, 3.0), scale = std::exp(rng.uniform(-5, 5));
    std::vector<double> xs, ys;
    for (std::size_t n = 1 + rng.below(100); xs.size() < pick(rng, 2, 8); n *= 2) {
        xs.push_back(static_cast<double>(n));
        ys.push_back(scale * std::pow(static_cast<double>(n), exponent));
    }
    const double slope = loglog_slope(xs, ys);
    if (std::abs(slope - exponent) > 1e-9) return describe("slope ", slope, " for exponent ", exponent);
    return std::nullopt;
}

Outcome param_count_matches_layer_formulas(Rng& rng)
{
    NamedParameters params;
    std::size_t expected = 0;
    const std::size_t layers = pick(rng, 1, 6);
    for (std::size_t i = 0; i < layers; ++i) {
        const std::string name = "layer" + std::to_string(i);
        if (rng.below(2)) {
            const std::size_t q = pick(rng, 1, 8), d = pick(rng, 1, 8), k = pick(rng, 1, 5);
            params.emplace_back(name + ".weight", Tensor::zeros({q, d, k, k}));
            params.emplace_back(name + ".bias", Tensor::zeros({q}));
            expected += conv_parameter_count(q, k, d);
        } else {
            const std::size_t in = pick(rng, 1, 16), out = pick(rng, 1, 16);
            params.emplace_back(name + ".weight", Tensor::zeros({in, out}));
            params.emplace_back(name + ".bias", Tensor::zeros({out}));
            expected += linear_parameter_count(in, out);
        }
    }
    const auto report = param_count(params);
    if (report.total != expected) return describe("total ", report.total, " vs ", expected);
    std::size_t sum = 0;
    for (const auto& l : report.layers) sum += l.count;
    if (sum != expected || report.layers.size() != layers) return describe("per-layer breakdown inconsistent");
    return std::nullopt;
}

Outcome attention_is_permutation_equivariant(Rng& rng)
{
    const std::size_t n = pick(rng, 1, 12), d = pick(rng, 1, 6);
    const Tensor x = random_tensor(rng, {n, d});
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    std::vector<double> xp(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) xp[i * d + j] = x.values()[perm[i] * d + j];
    const std::uint64_t seed = rng.next_u64();
    const Tensor out = attention_reference(x, seed);
    const auto y = out.values();
    const Tensor out_p = attention_reference(Tensor({n, d}, xp), seed);
    const auto yp = out_p.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            if (std::abs(yp[i * d + j] - y[perm[i] * d + j]) > 1e-12) return describe("row ", i, " not permuted");
        }
    return std::nullopt;
}

}  // namespace

const std::vector<Property>& all_properties()
{
    static const std::vector<Property> properties{
        {"numeric-core", "conv2d_matches_naive_loops", 1000, conv_matches_naive},
        {"numeric-core", "softmax_rows_sum_to_one", 1000, softmax_rows_sum_to_one},
        {"numeric-core", "layernorm_output_has_zero_mean", 1000, layernorm_zero_mean},
        {"numeric-core", "op_gradients_match_finite_differences", 1000, op_gradients_match_finite_differences},
        {"numeric-core", "ops_are_pure", 1000, ops_are_pure},
        {"ssm-scan", "parallel_equals_sequential", 1000, scan_parallel_equals_sequential},
        {"ssm-scan", "scan_is_causal", 1000, scan_is_causal},
        {"ssm-scan", "states_are_bounded", 1000, scan_states_are_bounded},
        {"ssm-scan", "scan_is_linear_in_u", 1000, scan_is_linear_in_u},
        {"tsmamba", "orientation_round_trip", 1000, orientation_round_trip},
        {"tsmamba", "block_is_identity_at_init", 1000, block_is_identity_at_init},
        {"tsmamba", "parameter_count_matches_closed_form", 1000, encoder_count_matches_closed_form},
        {"autoencoder", "forward_preserves_shape", 1000, autoencoder_preserves_shape},
        {"metrics", "accuracy_is_exact_trace_ratio", 1000, accuracy_is_exact_trace_ratio},
        {"metrics", "micro_recall_equals_accuracy", 1000, micro_recall_equals_accuracy},
        {"metrics", "folding_preserves_counts", 1000, folding_preserves_counts},
        {"metrics", "f1_between_precision_and_recall", 1000, f1_between_precision_and_recall},
        {"metrics", "percent_is_truncated_exactly", 1000, percent_is_truncated_exactly},
        {"metrics", "auc_matches_pairwise_count", 1000, auc_matches_pairwise_count},
        {"classifier", "logit_softmax_and_argmax_shift", 1000, logits_give_probabilities_and_shift_invariant_argmax},
        {"pipeline", "split_partitions_each_class", 1000, split_partitions_each_class},
        {"pipeline", "checkpoint_round_trip_is_byte_identical", 1000, checkpoint_round_trip_is_byte_identical},
        {"pipeline", "config_text_round_trips", 1000, config_text_round_trips},
        {"bench", "slope_fit_recovers_power_law", 1000, slope_fit_recovers_power_law},
        {"bench", "param_count_matches_layer_formulas", 1000, param_count_matches_layer_formulas},
        {"bench", "attention_is_permutation_equivariant", 1000, attention_is_permutation_equivariant},
    };
    return properties;
}

PropertyOutcome run_property(const Property& property, std::uint64_t seed)
{
    PropertyOutcome out{property.module, property.name, 0, 0, {}};
    for (std::size_t i = 0; i < property.cases; ++i) {
        Rng rng(mix_seed(seed, i));
        std::optional<std::string> failure;
        try {
            failure = property.check(rng);
        } catch (const std::exception& e) {
            failure = std::string("threw: ") + e.what();
        }
        ++out.cases;
        if (failure) {
            if (out.failures++ == 0) out.first_failure = "case " + std::to_string(i) + ": " + *failure;
        }
    }
    return out;
}

}  // namespace rmb::testing
