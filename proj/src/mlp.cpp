#include "mazefl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mazefl/detail/binary.hpp"
#include "mazefl/rng.hpp"

namespace mazefl {

MlpParams MlpParams::zeros(int in_dim, int hidden_dim, int out_dim) {
    if (in_dim < 1 || hidden_dim < 1 || out_dim < 1) {
        throw ShapeMismatch("layer sizes must be positive");
    }
    MlpParams p;
    p.in_dim = in_dim;
    p.hidden_dim = hidden_dim;
    p.out_dim = out_dim;
    p.w1.assign(static_cast<std::size_t>(hidden_dim) * in_dim, 0.0);
    p.b1.assign(hidden_dim, 0.0);
    p.w2.assign(static_cast<std::size_t>(out_dim) * hidden_dim, 0.0);
    p.b2.assign(out_dim, 0.0);
    return p;
}

bool MlpParams::same_shape(const MlpParams& other) const {
    return in_dim == other.in_dim && hidden_dim == other.hidden_dim &&
           out_dim == other.out_dim;
}

bool MlpParams::canonical_shape() const {
    return in_dim == kMlpInputDim && hidden_dim == kMlpHiddenDim &&
           out_dim == kMlpOutputDim;
}

MlpParams init_params(int in_dim, int hidden_dim, int out_dim,
                      std::uint64_t seed) {
    MlpParams p = MlpParams::zeros(in_dim, hidden_dim, out_dim);
    Rng rng(seed);
    double limit1 = std::sqrt(6.0 / (in_dim + hidden_dim));
    for (double& w : p.w1) {
        w = rng.uniform(-limit1, limit1);
    }
    double limit2 = std::sqrt(6.0 / (hidden_dim + out_dim));
    for (double& w : p.w2) {
        w = rng.uniform(-limit2, limit2);
    }
    return p;
}

MlpParams init_params(std::uint64_t seed) {
    return init_params(kMlpInputDim, kMlpHiddenDim, kMlpOutputDim, seed);
}

namespace {

void check_input_dim(const MlpParams& params, std::size_t dim) {
    if (dim != static_cast<std::size_t>(params.in_dim)) {
        throw ShapeMismatch("input has dim " + std::to_string(dim) +
                            ", model expects " + std::to_string(params.in_dim));
    }
}

// z1 and h may alias distinct rows of batch scratch; x is one sample.
void forward_hidden(const MlpParams& p, std::span<const float> x, double* z1) {
    for (int j = 0; j < p.hidden_dim; ++j) {
        const double* w = p.w1.data() + static_cast<std::size_t>(j) * p.in_dim;
        double acc = p.b1[j];
        for (int i = 0; i < p.in_dim; ++i) {
            acc += w[i] * static_cast<double>(x[i]);
        }
        z1[j] = acc;
    }
}

void logits_from_hidden(const MlpParams& p, const double* h, double* logits) {
    for (int o = 0; o < p.out_dim; ++o) {
        const double* w = p.w2.data() + static_cast<std::size_t>(o) * p.hidden_dim;
        double acc = p.b2[o];
        for (int j = 0; j < p.hidden_dim; ++j) {
            acc += w[j] * h[j];
        }
        logits[o] = acc;
    }
}

double squared_weight_norm(const MlpParams& p) {
    double sum = 0.0;
    for (double w : p.w1) sum += w * w;
    for (double w : p.w2) sum += w * w;
    return sum;
}

}  // namespace

std::vector<double> forward(const MlpParams& params,
                            std::span<const float> input) {
    check_input_dim(params, input.size());
    std::vector<double> h(params.hidden_dim);
    forward_hidden(params, input, h.data());
    for (double& v : h) {
        v = std::max(v, 0.0);
    }
    std::vector<double> logits(params.out_dim);
    logits_from_hidden(params, h.data(), logits.data());
    return logits;
}

std::vector<double> softmax(std::span<const double> logits) {
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) {
        v /= sum;
    }
    return p;
}

int predict(const MlpParams& params, std::span<const float> input) {
    std::vector<double> logits = forward(params, input);
    return static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
}

double loss_and_grad(const MlpParams& params, const Dataset& dataset,
                     std::span<const std::size_t> batch, double weight_decay,
                     MlpParams& grad) {
    if (batch.empty()) {
        throw InvalidArgument("batch must not be empty");
    }
    check_input_dim(params, dataset.feature_dim());

    grad = MlpParams::zeros(params.in_dim, params.hidden_dim, params.out_dim);
    const auto B = batch.size();
    const double inv_b = 1.0 / static_cast<double>(B);
    const int in = params.in_dim, hid = params.hidden_dim, out = params.out_dim;

    std::vector<double> x_rows(B * in);    // batch inputs, f64
    std::vector<double> d1_rows(B * hid);  // hidden deltas
    std::vector<double> z1(hid), logits(out);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        std::span<const float> x = dataset.features(batch[b]);
        double* xr = x_rows.data() + b * in;
        for (int i = 0; i < in; ++i) {
            xr[i] = static_cast<double>(x[i]);
        }

        forward_hidden(params, x, z1.data());
        std::vector<double> h(hid);
        for (int j = 0; j < hid; ++j) {
            h[j] = std::max(z1[j], 0.0);
        }
        logits_from_hidden(params, h.data(), logits.data());

        double m = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (int o = 0; o < out; ++o) {
            sum += std::exp(logits[o] - m);
        }
        double lse = m + std::log(sum);
        int y = dataset.label(batch[b]);
        loss_sum += lse - logits[y];

        // d2 = (softmax - onehot) / B
        std::vector<double> d2(out);
        for (int o = 0; o < out; ++o) {
            d2[o] = std::exp(logits[o] - lse) * inv_b;
        }
        d2[y] -= inv_b;

        for (int o = 0; o < out; ++o) {
            grad.b2[o] += d2[o];
            double* gw2 = grad.w2.data() + static_cast<std::size_t>(o) * hid;
            for (int j = 0; j < hid; ++j) {
                gw2[j] += d2[o] * h[j];
            }
        }

        double* d1 = d1_rows.data() + b * hid;
        for (int j = 0; j < hid; ++j) {
            if (z1[j] > 0.0) {
                double acc = 0.0;
                for (int o = 0; o < out; ++o) {
                    acc += params.w2[static_cast<std::size_t>(o) * hid + j] *
                           d2[o];
                }
                d1[j] = acc;
                grad.b1[j] += acc;
            } else {
                d1[j] = 0.0;
            }
        }
    }

    // grad.w1 = d1^T * x, accumulated row by row so each output row stays
    // hot while the batch streams through.
    for (int j = 0; j < hid; ++j) {
        double* gw1 = grad.w1.data() + static_cast<std::size_t>(j) * in;
        for (std::size_t b = 0; b < B; ++b) {
            double c = d1_rows[b * hid + j];
            if (c == 0.0) {
                continue;
            }
            const double* xr = x_rows.data() + b * in;
            for (int i = 0; i < in; ++i) {
                gw1[i] += c * xr[i];
            }
        }
    }

    if (weight_decay != 0.0) {
        for (std::size_t i = 0; i < params.w1.size(); ++i) {
            grad.w1[i] += weight_decay * params.w1[i];
        }
        for (std::size_t i = 0; i < params.w2.size(); ++i) {
            grad.w2[i] += weight_decay * params.w2[i];
        }
    }

    return loss_sum * inv_b + 0.5 * weight_decay * squared_weight_norm(params);
}

void sgd_step(MlpParams& params, const MlpParams& grad, double learning_rate) {
    if (!params.same_shape(grad)) {
        throw ShapeMismatch("gradient shape does not match parameters");
    }
    auto apply = [learning_rate](std::vector<double>& p,
                                 const std::vector<double>& g) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] -= learning_rate * g[i];
        }
    };
    apply(params.w1, grad.w1);
    apply(params.b1, grad.b1);
    apply(params.w2, grad.w2);
    apply(params.b2, grad.b2);
}

MlpParams train(MlpParams params, const Dataset& dataset,
                const TrainConfig& config) {
    if (dataset.empty()) {
        throw EmptyDataset("cannot train on an empty dataset");
    }
    if (config.batch_size < 1) {
        throw InvalidArgument("batch_size must be at least 1");
    }
    if (config.epochs < 0 || config.max_steps < 0) {
        throw InvalidArgument("epochs and max_steps must be nonnegative");
    }
    check_input_dim(params, dataset.feature_dim());

    Rng rng(config.shuffle_seed);
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    // With a step cap, epochs only bounds the reshuffle count; run
    // enough passes for the cap to be the binding limit.
    int epochs = config.max_steps > 0
                     ? std::max(config.epochs, config.max_steps)
                     : config.epochs;

    MlpParams grad;
    int steps = 0;
    auto bs = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            std::size_t len = std::min(bs, order.size() - start);
            loss_and_grad(params, dataset,
                          std::span(order).subspan(start, len),
                          config.weight_decay, grad);
            sgd_step(params, grad, config.learning_rate);
            if (config.max_steps > 0 && ++steps >= config.max_steps) {
                return params;
            }
        }
    }
    return params;
}

Evaluation evaluate(const MlpParams& params, const Dataset& dataset) {
    if (dataset.empty()) {
        throw EmptyDataset("cannot evaluate on an empty dataset");
    }
    Evaluation ev;
    ev.confusion.assign(params.out_dim,
                        std::vector<std::uint64_t>(params.out_dim, 0));
    std::uint64_t correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        int y = dataset.label(i);
        int pred = predict(params, dataset.features(i));
        ++ev.confusion[y][pred];
        if (pred == y) {
            ++correct;
        }
    }
    ev.accuracy = static_cast<double>(correct) /
                  static_cast<double>(dataset.size());
    return ev;
}

namespace {

constexpr char kCheckpointMagic[5] = "MZNN";
constexpr std::uint8_t kCheckpointVersion = 1;

constexpr std::size_t canonical_param_count() {
    return static_cast<std::size_t>(kMlpHiddenDim) * kMlpInputDim +
           kMlpHiddenDim +
           static_cast<std::size_t>(kMlpOutputDim) * kMlpHiddenDim +
           kMlpOutputDim;
}

}  // namespace

std::vector<std::uint8_t> encode_params(const MlpParams& params) {
    if (!params.canonical_shape()) {
        throw ShapeMismatch("only the canonical shape can be serialized");
    }
    std::vector<std::uint8_t> out;
    out.reserve(5 + 4 * canonical_param_count());
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
    detail::put_u8(out, kCheckpointVersion);
    for (const auto* vec : {&params.w1, &params.b1, &params.w2, &params.b2}) {
        for (double v : *vec) {
            detail::put_f32le(out, static_cast<float>(v));
        }
    }
    return out;
}

MlpParams decode_params(std::span<const std::uint8_t> bytes) {
    detail::ByteCursor cur(bytes);
    cur.expect_magic(kCheckpointMagic);
    if (cur.u8() != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version");
    }
    if (cur.remaining() != 4 * canonical_param_count()) {
        throw FormatError("checkpoint length does not match model shape");
    }
    MlpParams p =
        MlpParams::zeros(kMlpInputDim, kMlpHiddenDim, kMlpOutputDim);
    for (auto* vec : {&p.w1, &p.b1, &p.w2, &p.b2}) {
        for (double& v : *vec) {
            v = static_cast<double>(cur.f32le());
        }
    }
    return p;
}

void save_params(const MlpParams& params, const std::string& path) {
    std::vector<std::uint8_t> bytes = encode_params(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) {
        throw IoError("write failed: " + path);
    }
}

MlpParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read failed: " + path);
    }
    return decode_params(bytes);
}

}  // namespace mazefl
