#pragma once

// TinySegNet: a two-stage SegNet-style encoder-decoder.
//
//   input (1 x H x W)
//   enc1: conv3x3 -> tanh -> maxpool 2x2 (indices kept)      widths[0]
//   enc2: conv3x3 -> tanh -> maxpool 2x2 (indices kept)      widths[1]
//   dec2: unpool with enc2 indices -> conv3x3 -> tanh         widths[0]
//   dec1: unpool with enc1 indices -> conv3x3 -> tanh         widths[0]
//   head: conv1x1 -> per-pixel softmax                        classes
//
// All parameters live in one flat vector; Layer records where each weight
// and bias block starts. Feature maps are planar [channel][row][col].

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "mask.hpp"
#include "random.hpp"

namespace irisseg {

/// Planar feature map.
template <class T>
struct FeatureMap {
    std::size_t channels = 0, height = 0, width = 0;
    std::vector<T> data;

    FeatureMap() = default;
    FeatureMap(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), data(c * h * w) {}

    std::size_t plane() const noexcept { return height * width; }
    T* channel(std::size_t c) noexcept { return data.data() + c * plane(); }
    const T* channel(std::size_t c) const noexcept { return data.data() + c * plane(); }
};

namespace nn {

struct Layer {
    std::string name;
    std::size_t in = 0, out = 0, kernel = 3;
    std::size_t weight_offset = 0, bias_offset = 0;
    std::size_t weight_count() const { return out * in * kernel * kernel; }
};

// out[o] += sum_i w[o,i] (*) in[i], 3x3 kernel, zero padding 1.
template <class T>
void conv3x3_forward(const FeatureMap<T>& in, FeatureMap<T>& out, const T* w, const T* b) {
    const std::size_t H = in.height, W = in.width;
    for (std::size_t o = 0; o < out.channels; ++o) {
        T* dst = out.channel(o);
        std::fill(dst, dst + out.plane(), b[o]);
        for (std::size_t i = 0; i < in.channels; ++i) {
            const T* src = in.channel(i);
            const T* k = w + (o * in.channels + i) * 9;
            for (std::size_t ky = 0; ky < 3; ++ky) {
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    const T wk = k[ky * 3 + kx];
                    const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? W - 1 : W;
                    const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? H - 1 : H;
                    for (std::size_t y = y0; y < y1; ++y) {
                        T* drow = dst + y * W;
                        const T* srow = src + (y + ky - 1) * W + kx - 1;
#pragma omp simd
                        for (std::size_t x = x0; x < x1; ++x) drow[x] += wk * srow[x];
                    }
                }
            }
        }
    }
}

// Accumulates weight, bias and (optionally) input gradients of a 3x3 conv.
template <class T>
void conv3x3_backward(const FeatureMap<T>& in, const FeatureMap<T>& dout, const T* w, T* dw, T* db,
                      FeatureMap<T>* din) {
    const std::size_t H = in.height, W = in.width;
    for (std::size_t o = 0; o < dout.channels; ++o) {
        const T* g = dout.channel(o);
        T acc_b = 0;
#pragma omp simd reduction(+ : acc_b)
        for (std::size_t p = 0; p < dout.plane(); ++p) acc_b += g[p];
        db[o] += acc_b;
        for (std::size_t i = 0; i < in.channels; ++i) {
            const T* src = in.channel(i);
            T* dsrc = din ? din->channel(i) : nullptr;
            const std::size_t k0 = (o * in.channels + i) * 9;
            for (std::size_t ky = 0; ky < 3; ++ky) {
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    const T wk = w[k0 + ky * 3 + kx];
                    const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? W - 1 : W;
                    const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? H - 1 : H;
                    T acc = 0;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const T* grow = g + y * W;
                        const T* srow = src + (y + ky - 1) * W + kx - 1;
#pragma omp simd reduction(+ : acc)
                        for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * srow[x];
                        if (dsrc) {
                            T* drow = dsrc + (y + ky - 1) * W + kx - 1;
#pragma omp simd
                            for (std::size_t x = x0; x < x1; ++x) drow[x] += wk * grow[x];
                        }
                    }
                    dw[k0 + ky * 3 + kx] += acc;
                }
            }
        }
    }
}

template <class T>
void conv1x1_forward(const FeatureMap<T>& in, FeatureMap<T>& out, const T* w, const T* b) {
    for (std::size_t o = 0; o < out.channels; ++o) {
        T* dst = out.channel(o);
        std::fill(dst, dst + out.plane(), b[o]);
        for (std::size_t i = 0; i < in.channels; ++i) {
            const T wk = w[o * in.channels + i];
            const T* src = in.channel(i);
#pragma omp simd
            for (std::size_t p = 0; p < in.plane(); ++p) dst[p] += wk * src[p];
        }
    }
}

template <class T>
void conv1x1_backward(const FeatureMap<T>& in, const FeatureMap<T>& dout, const T* w, T* dw, T* db,
                      FeatureMap<T>& din) {
    for (std::size_t o = 0; o < dout.channels; ++o) {
        const T* g = dout.channel(o);
        T acc_b = 0;
#pragma omp simd reduction(+ : acc_b)
        for (std::size_t p = 0; p < dout.plane(); ++p) acc_b += g[p];
        db[o] += acc_b;
        for (std::size_t i = 0; i < in.channels; ++i) {
            const T* src = in.channel(i);
            T* dsrc = din.channel(i);
            const T wk = w[o * in.channels + i];
            T acc = 0;
#pragma omp simd reduction(+ : acc)
            for (std::size_t p = 0; p < in.plane(); ++p) acc += g[p] * src[p];
            dw[o * in.channels + i] += acc;
#pragma omp simd
            for (std::size_t p = 0; p < in.plane(); ++p) dsrc[p] += wk * g[p];
        }
    }
}

template <class T>
void tanh_inplace(FeatureMap<T>& x) {
    for (auto& v : x.data) v = std::tanh(v);
}

// Multiplies by tanh' expressed through the stored activation.
template <class T>
void tanh_backward(const FeatureMap<T>& activation, FeatureMap<T>& grad) {
    for (std::size_t k = 0; k < grad.data.size(); ++k)
        grad.data[k] *= T(1) - activation.data[k] * activation.data[k];
}

/// 2x2 max pooling; indices hold the in-plane offset of each window's
/// maximum (first occurrence in row-major order on ties).
template <class T>
FeatureMap<T> maxpool2x2(const FeatureMap<T>& in, std::vector<std::uint32_t>& indices) {
    FeatureMap<T> out(in.channels, in.height / 2, in.width / 2);
    indices.assign(out.data.size(), 0);
    for (std::size_t c = 0; c < in.channels; ++c) {
        const T* src = in.channel(c);
        T* dst = out.channel(c);
        std::uint32_t* idx = indices.data() + c * out.plane();
        for (std::size_t y = 0; y < out.height; ++y)
            for (std::size_t x = 0; x < out.width; ++x) {
                std::size_t best = (2 * y) * in.width + 2 * x;
                for (std::size_t off : {best + 1, best + in.width, best + in.width + 1})
                    if (src[off] > src[best]) best = off;
                dst[y * out.width + x] = src[best];
                idx[y * out.width + x] = static_cast<std::uint32_t>(best);
            }
    }
    return out;
}

/// Sparse upsampling: each value goes back to its recorded position, every
/// other position is zero.
template <class T>
FeatureMap<T> unpool2x2(const FeatureMap<T>& in, const std::vector<std::uint32_t>& indices, std::size_t height,
                        std::size_t width) {
    FeatureMap<T> out(in.channels, height, width);
    for (std::size_t c = 0; c < in.channels; ++c) {
        const T* src = in.channel(c);
        T* dst = out.channel(c);
        const std::uint32_t* idx = indices.data() + c * in.plane();
        for (std::size_t p = 0; p < in.plane(); ++p) dst[idx[p]] = src[p];
    }
    return out;
}

/// Gradient of unpooling: read back the gradient at each recorded position.
template <class T>
FeatureMap<T> unpool2x2_backward(const FeatureMap<T>& dout, const std::vector<std::uint32_t>& indices,
                                 std::size_t height, std::size_t width) {
    FeatureMap<T> din(dout.channels, height, width);
    for (std::size_t c = 0; c < dout.channels; ++c) {
        const T* g = dout.channel(c);
        T* d = din.channel(c);
        const std::uint32_t* idx = indices.data() + c * din.plane();
        for (std::size_t p = 0; p < din.plane(); ++p) d[p] = g[idx[p]];
    }
    return din;
}

/// Gradient of max pooling: route each pooled gradient to its argmax.
template <class T>
FeatureMap<T> maxpool2x2_backward(const FeatureMap<T>& dout, const std::vector<std::uint32_t>& indices,
                                  std::size_t height, std::size_t width) {
    FeatureMap<T> din(dout.channels, height, width);
    for (std::size_t c = 0; c < dout.channels; ++c) {
        const T* g = dout.channel(c);
        T* d = din.channel(c);
        const std::uint32_t* idx = indices.data() + c * dout.plane();
        for (std::size_t p = 0; p < dout.plane(); ++p) d[idx[p]] += g[p];
    }
    return din;
}

}  // namespace nn

struct SegNetTopology {
    std::size_t in_channels = 1;
    std::size_t width1 = 8;
    std::size_t width2 = 16;
    std::size_t classes = 2;
    friend bool operator==(const SegNetTopology&, const SegNetTopology&) = default;
};

/// Intermediate activations of one forward pass.
template <class T>
struct ForwardCache {
    SegNetTopology topology;
    FeatureMap<T> input, enc1, pool1, enc2, pool2, up2, dec2, up1, dec1;
    std::vector<std::uint32_t> idx1, idx2;
    ProbMap<T> probs;
};

template <class T>
class TinySegNet {
public:
    explicit TinySegNet(SegNetTopology topo = {}) : topo_(topo) {
        detail::require_config(topo.in_channels >= 1 && topo.width1 >= 1 && topo.width2 >= 1 && topo.classes >= 2,
                               "invalid network topology");
        std::size_t off = 0;
        auto add = [&](std::string name, std::size_t in, std::size_t out, std::size_t k) {
            nn::Layer l{std::move(name), in, out, k, off, 0};
            off += l.weight_count();
            l.bias_offset = off;
            off += out;
            layers_.push_back(l);
        };
        add("enc1", topo.in_channels, topo.width1, 3);
        add("enc2", topo.width1, topo.width2, 3);
        add("dec2", topo.width2, topo.width1, 3);
        add("dec1", topo.width1, topo.width1, 3);
        add("head", topo.width1, topo.classes, 1);
        params_.assign(off, T(0));
    }

    const SegNetTopology& topology() const noexcept { return topo_; }
    const std::vector<nn::Layer>& layers() const noexcept { return layers_; }
    std::span<T> parameters() noexcept { return params_; }
    std::span<const T> parameters() const noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
    void initialize(std::uint64_t seed) {
        Rng rng(seed, 0x5E6);
        for (const auto& l : layers_) {
            const double k2 = double(l.kernel * l.kernel);
            const double limit = std::sqrt(6.0 / (double(l.in) * k2 + double(l.out) * k2));
            for (std::size_t k = 0; k < l.weight_count(); ++k)
                params_[l.weight_offset + k] = static_cast<T>(rng.uniform(-limit, limit));
            std::fill_n(params_.begin() + l.bias_offset, l.out, T(0));
        }
    }

    /// Intensities in [0, 1] enter the network as (x - 0.5) * kInputGain.
    static constexpr double kInputGain = 4.0;

    /// Requires height and width divisible by 4.
    ForwardCache<T> forward(const Image<T>& image) const {
        detail::require_data(topo_.in_channels == 1, "image forward needs a single-channel network");
        const std::size_t H = image.height(), W = image.width();
        detail::require_data(H >= 4 && W >= 4 && H % 4 == 0 && W % 4 == 0,
                             "network input dimensions must be positive multiples of 4");
        ForwardCache<T> c;
        c.topology = topo_;
        c.input = FeatureMap<T>(1, H, W);
        for (std::size_t k = 0; k < image.size(); ++k) c.input.data[k] = (image[k] - T(0.5)) * T(kInputGain);

        c.enc1 = FeatureMap<T>(topo_.width1, H, W);
        conv(layers_[0], c.input, c.enc1);
        nn::tanh_inplace(c.enc1);
        c.pool1 = nn::maxpool2x2(c.enc1, c.idx1);

        c.enc2 = FeatureMap<T>(topo_.width2, H / 2, W / 2);
        conv(layers_[1], c.pool1, c.enc2);
        nn::tanh_inplace(c.enc2);
        c.pool2 = nn::maxpool2x2(c.enc2, c.idx2);

        c.up2 = nn::unpool2x2(c.pool2, c.idx2, H / 2, W / 2);
        c.dec2 = FeatureMap<T>(topo_.width1, H / 2, W / 2);
        conv(layers_[2], c.up2, c.dec2);
        nn::tanh_inplace(c.dec2);

        c.up1 = nn::unpool2x2(c.dec2, c.idx1, H, W);
        c.dec1 = FeatureMap<T>(topo_.width1, H, W);
        conv(layers_[3], c.up1, c.dec1);
        nn::tanh_inplace(c.dec1);

        FeatureMap<T> logits(topo_.classes, H, W);
        conv(layers_[4], c.dec1, logits);
        c.probs = ProbMap<T>(H, W, topo_.classes);
        for (std::size_t m = 0; m < H * W; ++m) {
            T mx = logits.channel(0)[m];
            for (std::size_t n = 1; n < topo_.classes; ++n) mx = std::max(mx, logits.channel(n)[m]);
            T sum = 0;
            for (std::size_t n = 0; n < topo_.classes; ++n) sum += c.probs.at(n, m) = std::exp(logits.channel(n)[m] - mx);
            for (std::size_t n = 0; n < topo_.classes; ++n) c.probs.at(n, m) /= sum;
        }
        return c;
    }

    ProbMap<T> predict(const Image<T>& image) const { return forward(image).probs; }

    /// Adds dLoss/dParameters to `grads` given dLoss/dProbabilities.
    void backward(const ForwardCache<T>& c, const ProbMap<T>& dprobs, std::span<T> grads) const {
        detail::require_data(c.topology == topo_, "forward cache belongs to a different topology");
        detail::require_data(dprobs.same_shape(c.probs), "loss gradient does not match the cached forward pass");
        detail::require_data(grads.size() == params_.size(), "gradient buffer size mismatch");
        const std::size_t H = c.input.height, W = c.input.width;

        // softmax: dz_n = p_n (g_n - sum_k p_k g_k)
        FeatureMap<T> dlogits(topo_.classes, H, W);
        for (std::size_t m = 0; m < H * W; ++m) {
            T dot = 0;
            for (std::size_t n = 0; n < topo_.classes; ++n) dot += c.probs.at(n, m) * dprobs.at(n, m);
            for (std::size_t n = 0; n < topo_.classes; ++n)
                dlogits.channel(n)[m] = c.probs.at(n, m) * (dprobs.at(n, m) - dot);
        }

        FeatureMap<T> ddec1(topo_.width1, H, W);
        conv_backward(layers_[4], c.dec1, dlogits, grads, &ddec1);
        nn::tanh_backward(c.dec1, ddec1);

        FeatureMap<T> dup1(topo_.width1, H, W);
        conv_backward(layers_[3], c.up1, ddec1, grads, &dup1);
        FeatureMap<T> ddec2 = nn::unpool2x2_backward(dup1, c.idx1, H / 2, W / 2);
        nn::tanh_backward(c.dec2, ddec2);

        FeatureMap<T> dup2(topo_.width2, H / 2, W / 2);
        conv_backward(layers_[2], c.up2, ddec2, grads, &dup2);
        FeatureMap<T> dpool2 = nn::unpool2x2_backward(dup2, c.idx2, H / 4, W / 4);

        FeatureMap<T> denc2 = nn::maxpool2x2_backward(dpool2, c.idx2, H / 2, W / 2);
        nn::tanh_backward(c.enc2, denc2);
        FeatureMap<T> dpool1(topo_.width1, H / 2, W / 2);
        conv_backward(layers_[1], c.pool1, denc2, grads, &dpool1);

        FeatureMap<T> denc1 = nn::maxpool2x2_backward(dpool1, c.idx1, H, W);
        nn::tanh_backward(c.enc1, denc1);
        conv_backward(layers_[0], c.input, denc1, grads, nullptr);
    }

    std::vector<T> backward(const ForwardCache<T>& c, const ProbMap<T>& dprobs) const {
        std::vector<T> grads(params_.size(), T(0));
        backward(c, dprobs, grads);
        return grads;
    }

    /// Text checkpoint: a topology header followed by one line per layer
    /// block. Values use shortest round-trip formatting.
    void save(std::ostream& out) const {
        out << "irisseg-tinysegnet 1\n";
        out << "topology " << topo_.in_channels << ' ' << topo_.width1 << ' ' << topo_.width2 << ' ' << topo_.classes
            << '\n';
        auto block = [&](const std::string& name, std::size_t off, std::size_t count) {
            out << name << ' ' << count;
            char buf[64];
            for (std::size_t k = 0; k < count; ++k) {
                auto [end, ec] = std::to_chars(buf, buf + sizeof buf, params_[off + k]);
                out << ' ' << std::string_view(buf, std::size_t(end - buf));
            }
            out << '\n';
        };
        for (const auto& l : layers_) {
            block(l.name + ".weight", l.weight_offset, l.weight_count());
            block(l.name + ".bias", l.bias_offset, l.out);
        }
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        detail::require_data(static_cast<bool>(out), "cannot write checkpoint " + path.string());
        save(out);
    }

    static TinySegNet load(std::istream& in) {
        std::string magic;
        int version = 0;
        in >> magic >> version;
        detail::require_data(magic == "irisseg-tinysegnet" && version == 1, "not a TinySegNet v1 checkpoint");
        std::string key;
        SegNetTopology t;
        in >> key >> t.in_channels >> t.width1 >> t.width2 >> t.classes;
        detail::require_data(in && key == "topology", "checkpoint topology header missing");
        TinySegNet net(t);
        auto block = [&](const std::string& name, std::size_t off, std::size_t count) {
            std::string got;
            std::size_t n = 0;
            in >> got >> n;
            detail::require_data(in && got == name && n == count, "checkpoint block mismatch at " + name);
            std::string tok;
            for (std::size_t k = 0; k < count; ++k) {
                in >> tok;
                T v{};
                auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
                detail::require_data(ec == std::errc{} && ptr == tok.data() + tok.size(),
                                     "malformed value in checkpoint block " + name);
                net.params_[off + k] = v;
            }
        };
        for (const auto& l : net.layers_) {
            block(l.name + ".weight", l.weight_offset, l.weight_count());
            block(l.name + ".bias", l.bias_offset, l.out);
        }
        return net;
    }

    static TinySegNet load(const std::filesystem::path& path) {
        std::ifstream in(path);
        detail::require_data(static_cast<bool>(in), "cannot open checkpoint " + path.string());
        return load(in);
    }

private:
    void conv(const nn::Layer& l, const FeatureMap<T>& in, FeatureMap<T>& out) const {
        const T* w = params_.data() + l.weight_offset;
        const T* b = params_.data() + l.bias_offset;
        if (l.kernel == 3)
            nn::conv3x3_forward(in, out, w, b);
        else
            nn::conv1x1_forward(in, out, w, b);
    }

    void conv_backward(const nn::Layer& l, const FeatureMap<T>& in, const FeatureMap<T>& dout, std::span<T> grads,
                       FeatureMap<T>* din) const {
        const T* w = params_.data() + l.weight_offset;
        T* dw = grads.data() + l.weight_offset;
        T* db = grads.data() + l.bias_offset;
        if (l.kernel == 3)
            nn::conv3x3_backward(in, dout, w, dw, db, din);
        else
            nn::conv1x1_backward(in, dout, w, dw, db, *din);
    }

    SegNetTopology topo_;
    std::vector<nn::Layer> layers_;
    std::vector<T> params_;
};

}  // namespace irisseg
