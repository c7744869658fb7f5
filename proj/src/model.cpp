#include "dprune/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace dprune {

Network::Network(std::size_t fc_hidden)
    : conv1(kConv1Filters, 1),
      conv2(kConv2Filters, kConv1Filters),
      dropout{kDropoutRate, Mode::eval, {}},
      fc1(fc_hidden, kFlatFeatures),
      fc2(kClasses, fc_hidden) {}

namespace {

void sample_uniform(Tensor& t, double bound, Rng& rng) {
    double* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) p[i] = rng.uniform(-bound, bound);
}

}  // namespace

Network init_network(const NetworkConfig& config) {
    if (config.fc_hidden <= kClasses || config.fc_hidden >= kFlatFeatures)
        throw ConfigError("fc_hidden must lie strictly between 10 and 640, got " +
                          std::to_string(config.fc_hidden));
    Network net(config.fc_hidden);
    Rng rng(config.seed);
    sample_uniform(net.conv1.weights, 1.0 / std::sqrt(1.0 * 25.0), rng);
    sample_uniform(net.conv2.weights, 1.0 / std::sqrt(kConv1Filters * 25.0), rng);
    sample_uniform(net.fc1.weights, 1.0 / std::sqrt(double(kFlatFeatures)), rng);
    sample_uniform(net.fc2.weights, 1.0 / std::sqrt(double(config.fc_hidden)), rng);
    return net;
}

std::size_t parameter_count(const Network& net) {
    return net.conv1.weights.size() + net.conv1.bias.size() + net.conv2.weights.size() +
           net.conv2.bias.size() + net.fc1.weights.size() + net.fc1.bias.size() +
           net.fc2.weights.size() + net.fc2.bias.size();
}

ForwardCache forward(const Network& net, const Tensor& x, Mode mode, Rng& rng) {
    if (x.shape().rank() != 4 || x.shape()[1] != 1 || x.shape()[2] != kImageSide ||
        x.shape()[3] != kImageSide)
        throw ShapeError("forward: expected [B,1,28,28] input, got " + x.shape().str());

    ForwardCache c;
    c.mode = mode;
    c.input = x;
    c.conv1_out = conv2d_forward(x, net.conv1);
    c.relu1_out = relu_forward(c.conv1_out);
    c.pool1 = maxpool2x2_forward(c.relu1_out);
    c.conv2_out = conv2d_forward(c.pool1.out, net.conv2);
    c.relu2_out = relu_forward(c.conv2_out);
    c.pool2 = maxpool2x2_forward(c.relu2_out);

    const std::size_t batch = x.shape()[0];
    c.flat = Tensor(Shape{batch, kFlatFeatures},
                    {c.pool2.out.data(), c.pool2.out.data() + c.pool2.out.size()});

    c.dropout = net.dropout;
    c.dropout.mode = mode;
    c.dropped = dropout_forward(c.flat, c.dropout, rng);

    c.fc1_out = linear_forward(c.dropped, net.fc1);
    c.relu_fc1 = relu_forward(c.fc1_out);
    c.fc2_out = linear_forward(c.relu_fc1, net.fc2);
    c.log_probs = log_softmax_forward(c.fc2_out);
    return c;
}

ForwardCache forward_eval(const Network& net, const Tensor& x) {
    Rng unused(0);
    return forward(net, x, Mode::eval, unused);
}

void backward(Network& net, const ForwardCache& c, const Tensor& loss_grad) {
    if (c.mode != Mode::train)
        throw StateError("backward: cache was produced by an eval-mode forward");

    Tensor g = log_softmax_backward(c.log_probs, loss_grad);
    g = linear_backward(c.relu_fc1, net.fc2, g);
    g = relu_backward(c.fc1_out, g);
    g = linear_backward(c.dropped, net.fc1, g);
    g = dropout_backward(g, c.dropout);
    Tensor g4(c.pool2.out.shape(), {g.data(), g.data() + g.size()});
    g4 = maxpool2x2_backward(g4, c.pool2);
    g4 = relu_backward(c.conv2_out, g4);
    g4 = conv2d_backward(c.pool1.out, net.conv2, g4);
    g4 = maxpool2x2_backward(g4, c.pool1);
    g4 = relu_backward(c.conv1_out, g4);
    conv2d_backward(c.input, net.conv1, g4);
}

namespace {

constexpr char kMagic[5] = {'D', 'P', 'R', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("model file truncated");
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw FormatError("model file truncated");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

void write_block(std::ostream& os, const Tensor& t) {
    put_u32(os, static_cast<std::uint32_t>(t.shape().rank()));
    for (std::size_t d : t.shape().dims) put_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(os, t[i]);
}

void read_block(std::istream& is, Tensor& t, const char* name) {
    const std::uint32_t rank = get_u32(is);
    if (rank != t.shape().rank())
        throw ShapeError(std::string("model block ") + name + ": rank " +
                         std::to_string(rank) + " does not match expected " +
                         t.shape().str());
    for (std::size_t axis = 0; axis < rank; ++axis) {
        const std::uint32_t d = get_u32(is);
        if (d != t.shape()[axis])
            throw ShapeError(std::string("model block ") + name + ": extent mismatch at axis " +
                             std::to_string(axis) + ", expected " + t.shape().str());
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = get_f64(is);
        if (!std::isfinite(v))
            throw FormatError(std::string("model block ") + name + ": non-finite value");
        t[i] = v;
    }
}

}  // namespace

std::vector<ParamBlock> param_blocks(Network& net) {
    return {
        {"conv1.w", &net.conv1.weights, &net.conv1.grad_weights},
        {"conv1.b", &net.conv1.bias, &net.conv1.grad_bias},
        {"conv2.w", &net.conv2.weights, &net.conv2.grad_weights},
        {"conv2.b", &net.conv2.bias, &net.conv2.grad_bias},
        {"fc1.w", &net.fc1.weights, &net.fc1.grad_weights},
        {"fc1.b", &net.fc1.bias, &net.fc1.grad_bias},
        {"fc2.w", &net.fc2.weights, &net.fc2.grad_weights},
        {"fc2.b", &net.fc2.bias, &net.fc2.grad_bias},
    };
}

void save_network(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write(kMagic, sizeof kMagic);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(net.hidden()));
    const Tensor* blocks[] = {&net.conv1.weights, &net.conv1.bias, &net.conv2.weights,
                              &net.conv2.bias,   &net.fc1.weights, &net.fc1.bias,
                              &net.fc2.weights,  &net.fc2.bias};
    for (const Tensor* t : blocks) write_block(os, *t);
    if (!os) throw IoError("write failed for " + path);
}

Network load_network(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path + " for reading");
    char magic[5];
    if (!is.read(magic, sizeof magic)) throw FormatError("model file truncated");
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw FormatError("bad model magic in " + path);
    const std::uint32_t version = get_u32(is);
    if (version != kVersion)
        throw FormatError("unsupported model version " + std::to_string(version));
    const std::uint32_t hidden = get_u32(is);
    if (hidden == 0) throw FormatError("model hidden size is zero");

    Network net(hidden);  // pruned models may fall outside the init bounds
    for (const auto& block : param_blocks(net)) read_block(is, *block.value, block.name);
    is.peek();
    if (!is.eof()) throw FormatError("trailing bytes in model file " + path);
    return net;
}

}  // namespace dprune
