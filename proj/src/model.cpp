#include "cardiomix/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cardiomix/errors.hpp"
#include "cardiomix/rng.hpp"

namespace cardiomix {

namespace {

// Seed stream tags for the stages inside training.
constexpr std::uint64_t kSeedInit = 0x11;
constexpr std::uint64_t kSeedShuffle = 0x22;
constexpr std::uint64_t kSeedMix = 0x33;

constexpr double kProbFloor = 1e-12;

enum class Init { Uniform, Zero, One };

struct TensorDef {
    std::string name;
    std::vector<int> shape;
    int fan_in = 0;
    int fan_out = 0;
    Init init = Init::Zero;
};

int pooled(int dim) { return dim / cnn::kPool; }

std::vector<TensorDef> tensor_defs(const ModelSpec& s) {
    const int d = s.input_h * s.input_w * s.input_c;
    const int k = s.num_classes;
    switch (s.arch) {
        case Arch::Logistic:
            return {
                {"w", {k, d}, d, k, Init::Uniform},
                {"b", {k}, 0, 0, Init::Zero},
            };
        case Arch::SmallCnn: {
            const int c1 = cnn::kConv1Channels, c2 = cnn::kConv2Channels;
            const int kk = cnn::kKernel;
            const int h4 = pooled(pooled(s.input_h)), w4 = pooled(pooled(s.input_w));
            const int flat = c2 * h4 * w4;
            return {
                {"conv1.w", {c1, s.input_c, kk, kk}, s.input_c * kk * kk, c1 * kk * kk, Init::Uniform},
                {"conv1.b", {c1}, 0, 0, Init::Zero},
                {"conv2.w", {c2, c1, kk, kk}, c1 * kk * kk, c2 * kk * kk, Init::Uniform},
                {"conv2.b", {c2}, 0, 0, Init::Zero},
                {"fc1.w", {cnn::kHidden, flat}, flat, cnn::kHidden, Init::Uniform},
                {"fc1.b", {cnn::kHidden}, 0, 0, Init::Zero},
                {"fc2.w", {k, cnn::kHidden}, cnn::kHidden, k, Init::Uniform},
                {"fc2.b", {k}, 0, 0, Init::Zero},
            };
        }
        case Arch::TinyVit: {
            const int e = vit::kEmbed, m = vit::kMlp, p = vit::kPatch;
            const int pd = p * p * s.input_c;
            const int tokens = (s.input_h / p) * (s.input_w / p) + 1;
            return {
                {"patch.w", {e, pd}, pd, e, Init::Uniform},
                {"patch.b", {e}, 0, 0, Init::Zero},
                {"cls", {e}, e, e, Init::Uniform},
                {"pos", {tokens, e}, e, e, Init::Uniform},
                {"ln1.g", {e}, 0, 0, Init::One},
                {"ln1.b", {e}, 0, 0, Init::Zero},
                {"attn.wq", {e, e}, e, e, Init::Uniform},
                {"attn.bq", {e}, 0, 0, Init::Zero},
                {"attn.wk", {e, e}, e, e, Init::Uniform},
                {"attn.bk", {e}, 0, 0, Init::Zero},
                {"attn.wv", {e, e}, e, e, Init::Uniform},
                {"attn.bv", {e}, 0, 0, Init::Zero},
                {"attn.wo", {e, e}, e, e, Init::Uniform},
                {"attn.bo", {e}, 0, 0, Init::Zero},
                {"ln2.g", {e}, 0, 0, Init::One},
                {"ln2.b", {e}, 0, 0, Init::Zero},
                {"mlp.w1", {m, e}, e, m, Init::Uniform},
                {"mlp.b1", {m}, 0, 0, Init::Zero},
                {"mlp.w2", {e, m}, m, e, Init::Uniform},
                {"mlp.b2", {e}, 0, 0, Init::Zero},
                {"head.w", {k, e}, e, k, Init::Uniform},
                {"head.b", {k}, 0, 0, Init::Zero},
            };
        }
    }
    throw UsageError("unknown architecture");
}

double gelu(double x) { return x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    return phi + x * std::exp(-0.5 * x * x) * 0.3989422804014326779;  // 1/sqrt(2*pi)
}

// [c][h][w] planes from the interleaved image layout.
std::vector<double> to_planar(const Image& img) {
    const int h = img.height(), w = img.width(), c = img.channels();
    std::vector<double> out(img.size());
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(static_cast<std::size_t>(ch) * h + y) * w + x] = img.at(y, x, ch);
    return out;
}

}  // namespace

const char* arch_name(Arch a) {
    switch (a) {
        case Arch::Logistic: return "logistic";
        case Arch::SmallCnn: return "smallcnn";
        case Arch::TinyVit: return "tinyvit";
    }
    return "?";
}

std::optional<Arch> arch_from_name(std::string_view name) {
    if (name == "logistic") return Arch::Logistic;
    if (name == "smallcnn") return Arch::SmallCnn;
    if (name == "tinyvit") return Arch::TinyVit;
    return std::nullopt;
}

void ModelSpec::validate() const {
    if (input_h < 1 || input_w < 1 || input_c < 1)
        throw UsageError("model input dimensions must be positive");
    if (num_classes < 2) throw UsageError("num_classes must be >= 2");
    if (arch == Arch::TinyVit &&
        (input_h % vit::kPatch != 0 || input_w % vit::kPatch != 0))
        throw UsageError("tinyvit requires input dimensions divisible by the patch size " +
                         std::to_string(vit::kPatch));
    if (arch == Arch::SmallCnn && (pooled(pooled(input_h)) < 1 || pooled(pooled(input_w)) < 1))
        throw UsageError("smallcnn requires input of at least 4x4");
}

ModelParams::ModelParams(const ModelSpec& spec, std::uint64_t seed, double init_scale)
    : spec_(spec) {
    spec_.validate();
    if (!(init_scale > 0.0)) throw UsageError("init scale must be > 0");
    const std::vector<TensorDef> defs = tensor_defs(spec_);
    tensors_.reserve(defs.size());
    for (std::size_t i = 0; i < defs.size(); ++i) {
        const TensorDef& def = defs[i];
        Tensor t(def.shape);
        switch (def.init) {
            case Init::Zero: break;
            case Init::One:
                std::fill(t.data.begin(), t.data.end(), 1.0);
                break;
            case Init::Uniform: {
                SplitMix64 rng(derive_seed(seed, i));
                const double s =
                    init_scale * std::sqrt(6.0 / static_cast<double>(def.fan_in + def.fan_out));
                for (double& v : t.data) v = rng.uniform(-s, s);
                break;
            }
        }
        tensors_.push_back({def.name, std::move(t)});
    }
}

ModelParams ModelParams::zeros_like(const ModelParams& shape) {
    ModelParams out = shape;
    for (NamedTensor& nt : out.tensors_)
        std::fill(nt.value.data.begin(), nt.value.data.end(), 0.0);
    return out;
}

Tensor& ModelParams::at(std::string_view name) {
    for (NamedTensor& nt : tensors_)
        if (nt.name == name) return nt.value;
    throw UsageError("no parameter tensor named '" + std::string(name) + "'");
}

const Tensor& ModelParams::at(std::string_view name) const {
    return const_cast<ModelParams*>(this)->at(name);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

double loss_soft_ce(const SoftLabel& probs, const SoftLabel& label) {
    if (probs.num_classes() != label.num_classes())
        throw UsageError("loss: probs and label lengths differ");
    double loss = 0.0;
    for (int k = 0; k < probs.num_classes(); ++k)
        loss -= label[k] * std::log(std::max(probs[k], kProbFloor));
    return loss;
}

// ---------------------------------------------------------------------------
// Forward passes with cached activations.

struct ForwardTrace {
    std::vector<double> input_planar;  // [c][h][w]
    std::vector<double> logits;
    // smallcnn
    std::vector<double> conv1_pre, relu1, pool1, conv2_pre, relu2, pool2, fc1_pre, relu3;
    std::vector<int> pool1_arg, pool2_arg;
    // tinyvit
    std::vector<double> patches, x0, n1, xhat1, inv1, q, k, v, attn, o, proj, x1, n2,
        xhat2, inv2, h1, g, h2, x2;
};

namespace {

void check_input(const ModelSpec& s, const Image& img) {
    if (img.height() != s.input_h || img.width() != s.input_w || img.channels() != s.input_c)
        throw UsageError("input image " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()) + "x" + std::to_string(img.channels()) +
                         " does not match model input " + std::to_string(s.input_h) + "x" +
                         std::to_string(s.input_w) + "x" + std::to_string(s.input_c));
}

// y = W x + b with W row-major [out][in].
void affine(const double* w, const double* b, const double* x, double* y, int out, int in) {
    for (int o = 0; o < out; ++o) {
        double s = b ? b[o] : 0.0;
        const double* row = w + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) s += row[i] * x[i];
        y[o] = s;
    }
}

// 3x3 convolution, stride 1, zero padding 1: output dims equal input dims.
void conv3x3_forward(const double* in, int in_c, int h, int w, const double* wgt,
                     const double* bias, double* out, int out_c) {
    const int kk = cnn::kKernel;
    for (int oc = 0; oc < out_c; ++oc) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = bias[oc];
                for (int ic = 0; ic < in_c; ++ic) {
                    const double* plane = in + (static_cast<std::size_t>(ic) * h) * w;
                    const double* kern =
                        wgt + ((static_cast<std::size_t>(oc) * in_c + ic) * kk) * kk;
                    for (int ky = 0; ky < kk; ++ky) {
                        const int iy = y + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kk; ++kx) {
                            const int ix = x + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            s += kern[ky * kk + kx] * plane[iy * w + ix];
                        }
                    }
                }
                out[(static_cast<std::size_t>(oc) * h + y) * w + x] = s;
            }
        }
    }
}

void conv3x3_backward(const double* in, int in_c, int h, int w, const double* wgt,
                      int out_c, const double* dout, double* din, double* dwgt,
                      double* dbias) {
    const int kk = cnn::kKernel;
    for (int oc = 0; oc < out_c; ++oc) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double d = dout[(static_cast<std::size_t>(oc) * h + y) * w + x];
                if (dbias) dbias[oc] += d;
                for (int ic = 0; ic < in_c; ++ic) {
                    const double* plane = in + (static_cast<std::size_t>(ic) * h) * w;
                    double* dplane = din ? din + (static_cast<std::size_t>(ic) * h) * w : nullptr;
                    const std::size_t kbase = ((static_cast<std::size_t>(oc) * in_c + ic) * kk) * kk;
                    for (int ky = 0; ky < kk; ++ky) {
                        const int iy = y + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kk; ++kx) {
                            const int ix = x + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            if (dwgt) dwgt[kbase + ky * kk + kx] += d * plane[iy * w + ix];
                            if (dplane) dplane[iy * w + ix] += d * wgt[kbase + ky * kk + kx];
                        }
                    }
                }
            }
        }
    }
}

// 2x2 max pooling, stride 2, floor division for odd dims; ties take the
// first maximum in scan order so gradient routing is deterministic.
void maxpool_forward(const double* in, int c, int h, int w, double* out, int* argmax) {
    const int ph = pooled(h), pw = pooled(w);
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = in + (static_cast<std::size_t>(ch) * h) * w;
        for (int y = 0; y < ph; ++y) {
            for (int x = 0; x < pw; ++x) {
                int best_idx = (2 * y) * w + 2 * x;
                double best = plane[best_idx];
                for (int dy = 0; dy < cnn::kPool; ++dy) {
                    for (int dx = 0; dx < cnn::kPool; ++dx) {
                        const int idx = (2 * y + dy) * w + (2 * x + dx);
                        if (plane[idx] > best) {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t out_idx = (static_cast<std::size_t>(ch) * ph + y) * pw + x;
                out[out_idx] = best;
                argmax[out_idx] = best_idx;
            }
        }
    }
}

void maxpool_backward(const double* dout, const int* argmax, int c, int h, int w,
                      double* din) {
    const int ph = pooled(h), pw = pooled(w);
    for (int ch = 0; ch < c; ++ch) {
        double* dplane = din + (static_cast<std::size_t>(ch) * h) * w;
        for (int i = 0; i < ph * pw; ++i) {
            const std::size_t out_idx = static_cast<std::size_t>(ch) * ph * pw + i;
            dplane[argmax[out_idx]] += dout[out_idx];
        }
    }
}

void forward_logistic(const ModelParams& p, const Image& img, ForwardTrace& t) {
    const ModelSpec& s = p.spec();
    const int d = s.input_h * s.input_w * s.input_c;
    t.logits.resize(s.num_classes);
    affine(p.at("w").data.data(), p.at("b").data.data(), img.data().data(),
           t.logits.data(), s.num_classes, d);
}

void forward_smallcnn(const ModelParams& p, const Image& img, ForwardTrace& t) {
    const ModelSpec& s = p.spec();
    const int h = s.input_h, w = s.input_w, c = s.input_c;
    const int c1 = cnn::kConv1Channels, c2 = cnn::kConv2Channels;
    const int h2 = pooled(h), w2 = pooled(w), h4 = pooled(h2), w4 = pooled(w2);

    t.input_planar = to_planar(img);
    t.conv1_pre.resize(static_cast<std::size_t>(c1) * h * w);
    conv3x3_forward(t.input_planar.data(), c, h, w, p.at("conv1.w").data.data(),
                    p.at("conv1.b").data.data(), t.conv1_pre.data(), c1);
    t.relu1.resize(t.conv1_pre.size());
    for (std::size_t i = 0; i < t.conv1_pre.size(); ++i)
        t.relu1[i] = t.conv1_pre[i] > 0.0 ? t.conv1_pre[i] : 0.0;

    t.pool1.resize(static_cast<std::size_t>(c1) * h2 * w2);
    t.pool1_arg.resize(t.pool1.size());
    maxpool_forward(t.relu1.data(), c1, h, w, t.pool1.data(), t.pool1_arg.data());

    t.conv2_pre.resize(static_cast<std::size_t>(c2) * h2 * w2);
    conv3x3_forward(t.pool1.data(), c1, h2, w2, p.at("conv2.w").data.data(),
                    p.at("conv2.b").data.data(), t.conv2_pre.data(), c2);
    t.relu2.resize(t.conv2_pre.size());
    for (std::size_t i = 0; i < t.conv2_pre.size(); ++i)
        t.relu2[i] = t.conv2_pre[i] > 0.0 ? t.conv2_pre[i] : 0.0;

    t.pool2.resize(static_cast<std::size_t>(c2) * h4 * w4);
    t.pool2_arg.resize(t.pool2.size());
    maxpool_forward(t.relu2.data(), c2, h2, w2, t.pool2.data(), t.pool2_arg.data());

    t.fc1_pre.resize(cnn::kHidden);
    affine(p.at("fc1.w").data.data(), p.at("fc1.b").data.data(), t.pool2.data(),
           t.fc1_pre.data(), cnn::kHidden, static_cast<int>(t.pool2.size()));
    t.relu3.resize(cnn::kHidden);
    for (int i = 0; i < cnn::kHidden; ++i)
        t.relu3[i] = t.fc1_pre[i] > 0.0 ? t.fc1_pre[i] : 0.0;

    t.logits.resize(s.num_classes);
    affine(p.at("fc2.w").data.data(), p.at("fc2.b").data.data(), t.relu3.data(),
           t.logits.data(), s.num_classes, cnn::kHidden);
}

void layer_norm_forward(const double* x, int tokens, int dim, const double* gain,
                        const double* shift, double* out, double* xhat, double* inv) {
    for (int t = 0; t < tokens; ++t) {
        const double* row = x + static_cast<std::size_t>(t) * dim;
        double mu = 0.0;
        for (int e = 0; e < dim; ++e) mu += row[e];
        mu /= dim;
        double var = 0.0;
        for (int e = 0; e < dim; ++e) var += (row[e] - mu) * (row[e] - mu);
        var /= dim;
        const double r = 1.0 / std::sqrt(var + vit::kLayerNormEps);
        inv[t] = r;
        for (int e = 0; e < dim; ++e) {
            const double xh = (row[e] - mu) * r;
            xhat[static_cast<std::size_t>(t) * dim + e] = xh;
            out[static_cast<std::size_t>(t) * dim + e] = gain[e] * xh + shift[e];
        }
    }
}

void forward_tinyvit(const ModelParams& p, const Image& img, ForwardTrace& t) {
    const ModelSpec& s = p.spec();
    const int pp = vit::kPatch, e = vit::kEmbed, heads = vit::kHeads, m = vit::kMlp;
    const int dh = e / heads;
    const int gy = s.input_h / pp, gx = s.input_w / pp;
    const int n = gy * gx, tokens = n + 1;
    const int pd = pp * pp * s.input_c;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    t.input_planar = to_planar(img);

    // Patch vectors, [c][dy][dx] within each patch, patches row-major.
    t.patches.assign(static_cast<std::size_t>(n) * pd, 0.0);
    for (int py = 0; py < gy; ++py) {
        for (int px = 0; px < gx; ++px) {
            double* dst = t.patches.data() + (static_cast<std::size_t>(py) * gx + px) * pd;
            for (int ch = 0; ch < s.input_c; ++ch)
                for (int dy = 0; dy < pp; ++dy)
                    for (int dx = 0; dx < pp; ++dx)
                        dst[(ch * pp + dy) * pp + dx] =
                            t.input_planar[(static_cast<std::size_t>(ch) * s.input_h + py * pp + dy) *
                                               s.input_w +
                                           px * pp + dx];
        }
    }

    // Token matrix: class token first, then embedded patches, plus positions.
    t.x0.assign(static_cast<std::size_t>(tokens) * e, 0.0);
    const double* cls = p.at("cls").data.data();
    const double* pos = p.at("pos").data.data();
    for (int i = 0; i < e; ++i) t.x0[i] = cls[i] + pos[i];
    for (int i = 0; i < n; ++i) {
        affine(p.at("patch.w").data.data(), p.at("patch.b").data.data(),
               t.patches.data() + static_cast<std::size_t>(i) * pd,
               t.x0.data() + static_cast<std::size_t>(i + 1) * e, e, pd);
        for (int j = 0; j < e; ++j)
            t.x0[static_cast<std::size_t>(i + 1) * e + j] += pos[static_cast<std::size_t>(i + 1) * e + j];
    }

    t.n1.resize(t.x0.size());
    t.xhat1.resize(t.x0.size());
    t.inv1.resize(tokens);
    layer_norm_forward(t.x0.data(), tokens, e, p.at("ln1.g").data.data(),
                       p.at("ln1.b").data.data(), t.n1.data(), t.xhat1.data(),
                       t.inv1.data());

    t.q.resize(t.x0.size());
    t.k.resize(t.x0.size());
    t.v.resize(t.x0.size());
    for (int tok = 0; tok < tokens; ++tok) {
        const double* row = t.n1.data() + static_cast<std::size_t>(tok) * e;
        affine(p.at("attn.wq").data.data(), p.at("attn.bq").data.data(), row,
               t.q.data() + static_cast<std::size_t>(tok) * e, e, e);
        affine(p.at("attn.wk").data.data(), p.at("attn.bk").data.data(), row,
               t.k.data() + static_cast<std::size_t>(tok) * e, e, e);
        affine(p.at("attn.wv").data.data(), p.at("attn.bv").data.data(), row,
               t.v.data() + static_cast<std::size_t>(tok) * e, e, e);
    }

    // Attention weights per head, rows softmaxed over key tokens.
    t.attn.assign(static_cast<std::size_t>(heads) * tokens * tokens, 0.0);
    t.o.assign(t.x0.size(), 0.0);
    std::vector<double> scores(tokens);
    for (int hd = 0; hd < heads; ++hd) {
        const int off = hd * dh;
        for (int tq = 0; tq < tokens; ++tq) {
            for (int tk = 0; tk < tokens; ++tk) {
                double sdot = 0.0;
                for (int d = 0; d < dh; ++d)
                    sdot += t.q[static_cast<std::size_t>(tq) * e + off + d] *
                            t.k[static_cast<std::size_t>(tk) * e + off + d];
                scores[tk] = sdot * scale;
            }
            const double mx = *std::max_element(scores.begin(), scores.end());
            double sum = 0.0;
            double* arow =
                t.attn.data() + (static_cast<std::size_t>(hd) * tokens + tq) * tokens;
            for (int tk = 0; tk < tokens; ++tk) {
                arow[tk] = std::exp(scores[tk] - mx);
                sum += arow[tk];
            }
            for (int tk = 0; tk < tokens; ++tk) arow[tk] /= sum;
            for (int d = 0; d < dh; ++d) {
                double acc = 0.0;
                for (int tk = 0; tk < tokens; ++tk)
                    acc += arow[tk] * t.v[static_cast<std::size_t>(tk) * e + off + d];
                t.o[static_cast<std::size_t>(tq) * e + off + d] = acc;
            }
        }
    }

    t.proj.resize(t.x0.size());
    for (int tok = 0; tok < tokens; ++tok)
        affine(p.at("attn.wo").data.data(), p.at("attn.bo").data.data(),
               t.o.data() + static_cast<std::size_t>(tok) * e,
               t.proj.data() + static_cast<std::size_t>(tok) * e, e, e);

    t.x1.resize(t.x0.size());
    for (std::size_t i = 0; i < t.x0.size(); ++i) t.x1[i] = t.x0[i] + t.proj[i];

    t.n2.resize(t.x0.size());
    t.xhat2.resize(t.x0.size());
    t.inv2.resize(tokens);
    layer_norm_forward(t.x1.data(), tokens, e, p.at("ln2.g").data.data(),
                       p.at("ln2.b").data.data(), t.n2.data(), t.xhat2.data(),
                       t.inv2.data());

    t.h1.resize(static_cast<std::size_t>(tokens) * m);
    t.g.resize(t.h1.size());
    t.h2.resize(t.x0.size());
    for (int tok = 0; tok < tokens; ++tok) {
        affine(p.at("mlp.w1").data.data(), p.at("mlp.b1").data.data(),
               t.n2.data() + static_cast<std::size_t>(tok) * e,
               t.h1.data() + static_cast<std::size_t>(tok) * m, m, e);
        for (int i = 0; i < m; ++i)
            t.g[static_cast<std::size_t>(tok) * m + i] =
                gelu(t.h1[static_cast<std::size_t>(tok) * m + i]);
        affine(p.at("mlp.w2").data.data(), p.at("mlp.b2").data.data(),
               t.g.data() + static_cast<std::size_t>(tok) * m,
               t.h2.data() + static_cast<std::size_t>(tok) * e, e, m);
    }

    t.x2.resize(t.x0.size());
    for (std::size_t i = 0; i < t.x0.size(); ++i) t.x2[i] = t.x1[i] + t.h2[i];

    t.logits.resize(s.num_classes);
    affine(p.at("head.w").data.data(), p.at("head.b").data.data(), t.x2.data(),
           t.logits.data(), s.num_classes, e);
}

void forward_impl(const ModelParams& p, const Image& img, ForwardTrace& t) {
    check_input(p.spec(), img);
    switch (p.spec().arch) {
        case Arch::Logistic: forward_logistic(p, img, t); break;
        case Arch::SmallCnn: forward_smallcnn(p, img, t); break;
        case Arch::TinyVit: forward_tinyvit(p, img, t); break;
    }
}

}  // namespace

std::vector<double> forward_logits(const ModelParams& params, const Image& image) {
    ForwardTrace t;
    forward_impl(params, image, t);
    return t.logits;
}

ForwardResult forward(const ModelParams& params, const Image& image) {
    std::vector<double> logits = forward_logits(params, image);
    SoftLabel probs{softmax(logits)};
    return {std::move(logits), std::move(probs)};
}

std::vector<std::vector<double>> attention_rows(const ModelParams& params,
                                                const Image& image) {
    if (params.spec().arch != Arch::TinyVit)
        throw UnsupportedArchError("attention_rows requires the tinyvit architecture");
    ForwardTrace t;
    forward_impl(params, image, t);
    const int tokens = (params.spec().input_h / vit::kPatch) *
                           (params.spec().input_w / vit::kPatch) +
                       1;
    std::vector<std::vector<double>> out(vit::kHeads);
    for (int hd = 0; hd < vit::kHeads; ++hd)
        out[hd].assign(t.attn.begin() + static_cast<std::size_t>(hd) * tokens * tokens,
                       t.attn.begin() + static_cast<std::size_t>(hd + 1) * tokens * tokens);
    return out;
}

// ---------------------------------------------------------------------------
// Backward passes.

namespace {

struct BackpropSinks {
    std::vector<NamedTensor>* param_grads = nullptr;  // aligned with params order
    std::vector<double>* input_grad = nullptr;        // planar [c][h][w]
    std::vector<double>* feature_grad = nullptr;      // smallcnn relu2 grads
};

double* grad_of(BackpropSinks& sinks, const ModelParams& p, std::string_view name) {
    if (!sinks.param_grads) return nullptr;
    for (std::size_t i = 0; i < p.tensors().size(); ++i)
        if (p.tensors()[i].name == name) return (*sinks.param_grads)[i].value.data.data();
    throw UsageError("no gradient tensor named '" + std::string(name) + "'");
}

void backward_logistic(const ModelParams& p, const Image& img, const ForwardTrace&,
                       const std::vector<double>& dlogits, BackpropSinks sinks) {
    const ModelSpec& s = p.spec();
    const int d = s.input_h * s.input_w * s.input_c;
    const double* x = img.data().data();
    double* dw = grad_of(sinks, p, "w");
    double* db = grad_of(sinks, p, "b");
    const double* w = p.at("w").data.data();
    for (int k = 0; k < s.num_classes; ++k) {
        const double dl = dlogits[k];
        if (db) db[k] += dl;
        if (dw) {
            double* row = dw + static_cast<std::size_t>(k) * d;
            for (int i = 0; i < d; ++i) row[i] += dl * x[i];
        }
    }
    if (sinks.input_grad) {
        // Interleaved weight index -> planar pixel gradient.
        std::vector<double>& gi = *sinks.input_grad;
        for (int y = 0; y < s.input_h; ++y)
            for (int xx = 0; xx < s.input_w; ++xx)
                for (int ch = 0; ch < s.input_c; ++ch) {
                    const int di = (y * s.input_w + xx) * s.input_c + ch;
                    double acc = 0.0;
                    for (int k = 0; k < s.num_classes; ++k)
                        acc += dlogits[k] * w[static_cast<std::size_t>(k) * d + di];
                    gi[(static_cast<std::size_t>(ch) * s.input_h + y) * s.input_w + xx] += acc;
                }
    }
}

void backward_smallcnn(const ModelParams& p, const Image&, const ForwardTrace& t,
                       const std::vector<double>& dlogits, BackpropSinks sinks) {
    const ModelSpec& s = p.spec();
    const int h = s.input_h, w = s.input_w, c = s.input_c;
    const int c1 = cnn::kConv1Channels, c2 = cnn::kConv2Channels;
    const int h2 = pooled(h), w2 = pooled(w), h4 = pooled(h2), w4 = pooled(w2);
    const int flat = c2 * h4 * w4;

    // fc2
    std::vector<double> drelu3(cnn::kHidden, 0.0);
    {
        const double* w2p = p.at("fc2.w").data.data();
        double* dwp = grad_of(sinks, p, "fc2.w");
        double* dbp = grad_of(sinks, p, "fc2.b");
        for (int k = 0; k < s.num_classes; ++k) {
            const double dl = dlogits[k];
            if (dbp) dbp[k] += dl;
            for (int i = 0; i < cnn::kHidden; ++i) {
                if (dwp) dwp[static_cast<std::size_t>(k) * cnn::kHidden + i] += dl * t.relu3[i];
                drelu3[i] += dl * w2p[static_cast<std::size_t>(k) * cnn::kHidden + i];
            }
        }
    }
    // relu3 + fc1
    std::vector<double> dpool2(flat, 0.0);
    {
        const double* w1p = p.at("fc1.w").data.data();
        double* dwp = grad_of(sinks, p, "fc1.w");
        double* dbp = grad_of(sinks, p, "fc1.b");
        for (int i = 0; i < cnn::kHidden; ++i) {
            const double dh = t.fc1_pre[i] > 0.0 ? drelu3[i] : 0.0;
            if (dbp) dbp[i] += dh;
            if (dh == 0.0) continue;
            const double* row = w1p + static_cast<std::size_t>(i) * flat;
            double* dwrow = dwp ? dwp + static_cast<std::size_t>(i) * flat : nullptr;
            for (int j = 0; j < flat; ++j) {
                if (dwrow) dwrow[j] += dh * t.pool2[j];
                dpool2[j] += dh * row[j];
            }
        }
    }
    // pool2 -> relu2 -> conv2
    std::vector<double> drelu2(static_cast<std::size_t>(c2) * h2 * w2, 0.0);
    maxpool_backward(dpool2.data(), t.pool2_arg.data(), c2, h2, w2, drelu2.data());
    if (sinks.feature_grad) *sinks.feature_grad = drelu2;
    std::vector<double> dconv2(drelu2.size());
    for (std::size_t i = 0; i < drelu2.size(); ++i)
        dconv2[i] = t.conv2_pre[i] > 0.0 ? drelu2[i] : 0.0;

    std::vector<double> dpool1(static_cast<std::size_t>(c1) * h2 * w2, 0.0);
    conv3x3_backward(t.pool1.data(), c1, h2, w2, p.at("conv2.w").data.data(), c2,
                     dconv2.data(), dpool1.data(), grad_of(sinks, p, "conv2.w"),
                     grad_of(sinks, p, "conv2.b"));

    // pool1 -> relu1 -> conv1
    std::vector<double> drelu1(static_cast<std::size_t>(c1) * h * w, 0.0);
    maxpool_backward(dpool1.data(), t.pool1_arg.data(), c1, h, w, drelu1.data());
    std::vector<double> dconv1(drelu1.size());
    for (std::size_t i = 0; i < drelu1.size(); ++i)
        dconv1[i] = t.conv1_pre[i] > 0.0 ? drelu1[i] : 0.0;

    conv3x3_backward(t.input_planar.data(), c, h, w, p.at("conv1.w").data.data(), c1,
                     dconv1.data(), sinks.input_grad ? sinks.input_grad->data() : nullptr,
                     grad_of(sinks, p, "conv1.w"), grad_of(sinks, p, "conv1.b"));
}

void layer_norm_backward(const double* dout, const double* xhat, const double* inv,
                         const double* gain, int tokens, int dim, double* dx,
                         double* dgain, double* dshift) {
    for (int t = 0; t < tokens; ++t) {
        const std::size_t base = static_cast<std::size_t>(t) * dim;
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int e = 0; e < dim; ++e) {
            const double dxh = dout[base + e] * gain[e];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat[base + e];
            if (dgain) dgain[e] += dout[base + e] * xhat[base + e];
            if (dshift) dshift[e] += dout[base + e];
        }
        mean_dxhat /= dim;
        mean_dxhat_xhat /= dim;
        for (int e = 0; e < dim; ++e) {
            const double dxh = dout[base + e] * gain[e];
            dx[base + e] += inv[t] * (dxh - mean_dxhat - xhat[base + e] * mean_dxhat_xhat);
        }
    }
}

void backward_tinyvit(const ModelParams& p, const Image&, const ForwardTrace& t,
                      const std::vector<double>& dlogits, BackpropSinks sinks) {
    const ModelSpec& s = p.spec();
    const int pp = vit::kPatch, e = vit::kEmbed, heads = vit::kHeads, m = vit::kMlp;
    const int dh = e / heads;
    const int gy = s.input_h / pp, gx = s.input_w / pp;
    const int n = gy * gx, tokens = n + 1;
    const int pd = pp * pp * s.input_c;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // head (class token only)
    std::vector<double> dx2(static_cast<std::size_t>(tokens) * e, 0.0);
    {
        const double* wh = p.at("head.w").data.data();
        double* dwh = grad_of(sinks, p, "head.w");
        double* dbh = grad_of(sinks, p, "head.b");
        for (int k = 0; k < s.num_classes; ++k) {
            const double dl = dlogits[k];
            if (dbh) dbh[k] += dl;
            for (int i = 0; i < e; ++i) {
                if (dwh) dwh[static_cast<std::size_t>(k) * e + i] += dl * t.x2[i];
                dx2[i] += dl * wh[static_cast<std::size_t>(k) * e + i];
            }
        }
    }

    // residual: x2 = x1 + h2
    std::vector<double> dx1 = dx2;

    // MLP
    std::vector<double> dn2(static_cast<std::size_t>(tokens) * e, 0.0);
    {
        const double* w1p = p.at("mlp.w1").data.data();
        const double* w2p = p.at("mlp.w2").data.data();
        double* dw1 = grad_of(sinks, p, "mlp.w1");
        double* db1 = grad_of(sinks, p, "mlp.b1");
        double* dw2 = grad_of(sinks, p, "mlp.w2");
        double* db2 = grad_of(sinks, p, "mlp.b2");
        std::vector<double> dg(m);
        for (int tok = 0; tok < tokens; ++tok) {
            const std::size_t be = static_cast<std::size_t>(tok) * e;
            const std::size_t bm = static_cast<std::size_t>(tok) * m;
            for (int i = 0; i < m; ++i) dg[i] = 0.0;
            for (int j = 0; j < e; ++j) {
                const double d = dx2[be + j];
                if (db2) db2[j] += d;
                for (int i = 0; i < m; ++i) {
                    if (dw2) dw2[static_cast<std::size_t>(j) * m + i] += d * t.g[bm + i];
                    dg[i] += d * w2p[static_cast<std::size_t>(j) * m + i];
                }
            }
            for (int i = 0; i < m; ++i) {
                const double dh1 = dg[i] * gelu_grad(t.h1[bm + i]);
                if (db1) db1[i] += dh1;
                for (int j = 0; j < e; ++j) {
                    if (dw1) dw1[static_cast<std::size_t>(i) * e + j] += dh1 * t.n2[be + j];
                    dn2[be + j] += dh1 * w1p[static_cast<std::size_t>(i) * e + j];
                }
            }
        }
    }
    layer_norm_backward(dn2.data(), t.xhat2.data(), t.inv2.data(), p.at("ln2.g").data.data(),
                        tokens, e, dx1.data(), grad_of(sinks, p, "ln2.g"),
                        grad_of(sinks, p, "ln2.b"));

    // residual: x1 = x0 + proj
    std::vector<double> dx0 = dx1;
    std::vector<double> dproj = std::move(dx1);

    // output projection
    std::vector<double> do_(static_cast<std::size_t>(tokens) * e, 0.0);
    {
        const double* wo = p.at("attn.wo").data.data();
        double* dwo = grad_of(sinks, p, "attn.wo");
        double* dbo = grad_of(sinks, p, "attn.bo");
        for (int tok = 0; tok < tokens; ++tok) {
            const std::size_t be = static_cast<std::size_t>(tok) * e;
            for (int j = 0; j < e; ++j) {
                const double d = dproj[be + j];
                if (dbo) dbo[j] += d;
                for (int i = 0; i < e; ++i) {
                    if (dwo) dwo[static_cast<std::size_t>(j) * e + i] += d * t.o[be + i];
                    do_[be + i] += d * wo[static_cast<std::size_t>(j) * e + i];
                }
            }
        }
    }

    // attention heads
    std::vector<double> dq(static_cast<std::size_t>(tokens) * e, 0.0);
    std::vector<double> dk(static_cast<std::size_t>(tokens) * e, 0.0);
    std::vector<double> dv(static_cast<std::size_t>(tokens) * e, 0.0);
    std::vector<double> da(tokens), ds(tokens);
    for (int hd = 0; hd < heads; ++hd) {
        const int off = hd * dh;
        for (int tq = 0; tq < tokens; ++tq) {
            const double* arow =
                t.attn.data() + (static_cast<std::size_t>(hd) * tokens + tq) * tokens;
            // dA = dO . V^T ; dV += A^T dO
            for (int tk = 0; tk < tokens; ++tk) {
                double acc = 0.0;
                for (int d = 0; d < dh; ++d) {
                    const double dod = do_[static_cast<std::size_t>(tq) * e + off + d];
                    acc += dod * t.v[static_cast<std::size_t>(tk) * e + off + d];
                    }
                da[tk] = acc;
            }
            for (int tk = 0; tk < tokens; ++tk)
                for (int d = 0; d < dh; ++d)
                    dv[static_cast<std::size_t>(tk) * e + off + d] +=
                        arow[tk] * do_[static_cast<std::size_t>(tq) * e + off + d];
            // softmax rows
            double dot = 0.0;
            for (int tk = 0; tk < tokens; ++tk) dot += da[tk] * arow[tk];
            for (int tk = 0; tk < tokens; ++tk) ds[tk] = arow[tk] * (da[tk] - dot);
            // scores = Q K^T * scale
            for (int tk = 0; tk < tokens; ++tk) {
                const double d = ds[tk] * scale;
                for (int dd = 0; dd < dh; ++dd) {
                    dq[static_cast<std::size_t>(tq) * e + off + dd] +=
                        d * t.k[static_cast<std::size_t>(tk) * e + off + dd];
                    dk[static_cast<std::size_t>(tk) * e + off + dd] +=
                        d * t.q[static_cast<std::size_t>(tq) * e + off + dd];
                }
            }
        }
    }

    // qkv linears back to n1
    std::vector<double> dn1(static_cast<std::size_t>(tokens) * e, 0.0);
    struct Lin {
        const char* w;
        const char* b;
        const std::vector<double>* d;
    };
    const Lin lins[3] = {{"attn.wq", "attn.bq", &dq},
                         {"attn.wk", "attn.bk", &dk},
                         {"attn.wv", "attn.bv", &dv}};
    for (const Lin& lin : lins) {
        const double* wp = p.at(lin.w).data.data();
        double* dwp = grad_of(sinks, p, lin.w);
        double* dbp = grad_of(sinks, p, lin.b);
        for (int tok = 0; tok < tokens; ++tok) {
            const std::size_t be = static_cast<std::size_t>(tok) * e;
            for (int j = 0; j < e; ++j) {
                const double d = (*lin.d)[be + j];
                if (d == 0.0) continue;
                if (dbp) dbp[j] += d;
                for (int i = 0; i < e; ++i) {
                    if (dwp) dwp[static_cast<std::size_t>(j) * e + i] += d * t.n1[be + i];
                    dn1[be + i] += d * wp[static_cast<std::size_t>(j) * e + i];
                }
            }
        }
    }
    layer_norm_backward(dn1.data(), t.xhat1.data(), t.inv1.data(), p.at("ln1.g").data.data(),
                        tokens, e, dx0.data(), grad_of(sinks, p, "ln1.g"),
                        grad_of(sinks, p, "ln1.b"));

    // token assembly: cls + pos, patch embeddings + pos
    {
        double* dcls = grad_of(sinks, p, "cls");
        double* dpos = grad_of(sinks, p, "pos");
        double* dwp = grad_of(sinks, p, "patch.w");
        double* dbp = grad_of(sinks, p, "patch.b");
        const double* wp = p.at("patch.w").data.data();
        if (dcls)
            for (int i = 0; i < e; ++i) dcls[i] += dx0[i];
        if (dpos)
            for (std::size_t i = 0; i < dx0.size(); ++i) dpos[i] += dx0[i];
        std::vector<double> dpatch(pd);
        for (int i = 0; i < n; ++i) {
            const double* demb = dx0.data() + static_cast<std::size_t>(i + 1) * e;
            const double* patch = t.patches.data() + static_cast<std::size_t>(i) * pd;
            if (dbp)
                for (int j = 0; j < e; ++j) dbp[j] += demb[j];
            if (dwp)
                for (int j = 0; j < e; ++j)
                    for (int d = 0; d < pd; ++d)
                        dwp[static_cast<std::size_t>(j) * pd + d] += demb[j] * patch[d];
            if (sinks.input_grad) {
                for (int d = 0; d < pd; ++d) {
                    double acc = 0.0;
                    for (int j = 0; j < e; ++j)
                        acc += demb[j] * wp[static_cast<std::size_t>(j) * pd + d];
                    dpatch[d] = acc;
                }
                const int py = i / gx, px = i % gx;
                for (int ch = 0; ch < s.input_c; ++ch)
                    for (int dy = 0; dy < pp; ++dy)
                        for (int dx = 0; dx < pp; ++dx)
                            (*sinks.input_grad)[(static_cast<std::size_t>(ch) * s.input_h +
                                                 py * pp + dy) *
                                                    s.input_w +
                                                px * pp + dx] +=
                                dpatch[(ch * pp + dy) * pp + dx];
            }
        }
    }
}

void backward_impl(const ModelParams& p, const Image& img, const ForwardTrace& t,
                   const std::vector<double>& dlogits, BackpropSinks sinks) {
    switch (p.spec().arch) {
        case Arch::Logistic: backward_logistic(p, img, t, dlogits, sinks); break;
        case Arch::SmallCnn: backward_smallcnn(p, img, t, dlogits, sinks); break;
        case Arch::TinyVit: backward_tinyvit(p, img, t, dlogits, sinks); break;
    }
}

}  // namespace

GradResult backward(const ModelParams& params, const std::vector<Sample>& batch) {
    if (batch.empty()) throw UsageError("backward: empty batch");
    GradResult result;
    result.grads.reserve(params.tensors().size());
    for (const NamedTensor& nt : params.tensors())
        result.grads.push_back({nt.name, Tensor(nt.value.shape)});

    ForwardTrace trace;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    BackpropSinks sinks;
    sinks.param_grads = &result.grads;
    for (const Sample& sample : batch) {
        forward_impl(params, *sample.image, trace);
        const std::vector<double> probs = softmax(trace.logits);
        const SoftLabel& label = *sample.label;
        if (static_cast<int>(probs.size()) != label.num_classes())
            throw UsageError("backward: label dimension mismatch");
        result.mean_loss += loss_soft_ce(SoftLabel{probs}, label) * inv_batch;
        std::vector<double> dlogits(probs.size());
        for (std::size_t k = 0; k < probs.size(); ++k)
            dlogits[k] = (probs[k] - label[static_cast<int>(k)]) * inv_batch;
        backward_impl(params, *sample.image, trace, dlogits, sinks);
    }
    return result;
}

InputGradResult logit_input_gradient(const ModelParams& params, const Image& image,
                                     int target_class) {
    const ModelSpec& s = params.spec();
    if (target_class < 0 || target_class >= s.num_classes)
        throw UsageError("target class out of range");
    ForwardTrace trace;
    forward_impl(params, image, trace);

    InputGradResult out;
    out.input_grad = Tensor({s.input_c, s.input_h, s.input_w});
    std::vector<double> input_grad(out.input_grad.data.size(), 0.0);
    std::vector<double> feature_grad;

    std::vector<double> dlogits(s.num_classes, 0.0);
    dlogits[target_class] = 1.0;
    BackpropSinks sinks;
    sinks.input_grad = &input_grad;
    sinks.feature_grad = s.arch == Arch::SmallCnn ? &feature_grad : nullptr;
    backward_impl(params, image, trace, dlogits, sinks);

    out.input_grad.data = std::move(input_grad);
    if (s.arch == Arch::SmallCnn) {
        const int h2 = pooled(s.input_h), w2 = pooled(s.input_w);
        out.feature_maps = Tensor({cnn::kConv2Channels, h2, w2});
        out.feature_maps.data = trace.relu2;
        out.feature_grad = Tensor({cnn::kConv2Channels, h2, w2});
        out.feature_grad.data = std::move(feature_grad);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training.

void TrainConfig::validate() const {
    if (epochs < 0) throw UsageError("epochs must be >= 0");
    if (batch_size < 1) throw UsageError("batch size must be >= 1");
    if (learning_rate < 0.0) throw UsageError("learning rate must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw UsageError("momentum must be in [0,1)");
    if (!(init_scale > 0.0)) throw UsageError("init scale must be > 0");
    if (augment) {
        augment->params.validate();
        if (augment->fraction < 0.0 || augment->fraction > 1.0)
            throw UsageError("mix fraction must be in [0,1]");
    }
}

double default_learning_rate(Arch a) { return a == Arch::Logistic ? 0.05 : 0.01; }

TrainResult train_subset(const Dataset& dataset, const std::vector<int>& indices,
                         const ModelSpec& spec, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (indices.empty()) throw UsageError("train: empty dataset");
    for (int idx : indices) check_input(spec, dataset.examples()[idx].image);
    if (cfg.augment && indices.size() < 2 && cfg.augment->fraction > 0.0)
        throw UsageError("train: augmentation needs at least 2 examples");

    ModelParams params(spec, derive_seed(cfg.seed, kSeedInit), cfg.init_scale);
    ModelParams velocity = ModelParams::zeros_like(params);

    const std::size_t n = indices.size();
    std::vector<int> perm(indices.begin(), indices.end());
    std::vector<double> history;
    history.reserve(cfg.epochs);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        SplitMix64 shuffle_rng(derive_seed(cfg.seed, kSeedShuffle, epoch));
        for (std::size_t i = n; i > 1; --i)
            std::swap(perm[i - 1], perm[shuffle_rng.below(i)]);
        SplitMix64 mix_rng(derive_seed(cfg.seed, kSeedMix, epoch));

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min<std::size_t>(cfg.batch_size, n - start);
            std::vector<Sample> batch(len);
            for (std::size_t i = 0; i < len; ++i) {
                const Example& ex = dataset.examples()[perm[start + i]];
                batch[i] = {&ex.image, &ex.label};
            }
            std::vector<MixedExample> mixed;
            if (cfg.augment && cfg.augment->fraction > 0.0) {
                const std::size_t n_mix = static_cast<std::size_t>(
                    std::llround(cfg.augment->fraction * static_cast<double>(len)));
                mixed.reserve(n_mix);
                for (std::size_t i = 0; i < n_mix; ++i) {
                    const std::size_t a = mix_rng.below(n);
                    std::size_t b = mix_rng.below(n - 1);
                    if (b >= a) ++b;
                    const Example& ea = dataset.examples()[indices[a]];
                    const Example& eb = dataset.examples()[indices[b]];
                    mixed.push_back(cfg.augment->params.method == MixMethod::CutMix
                                        ? cutmix(ea, eb, cfg.augment->params, mix_rng)
                                        : mixup(ea, eb, cfg.augment->params, mix_rng));
                    batch[i] = {&mixed.back().image, &mixed.back().label};
                }
            }

            GradResult g = backward(params, batch);
            loss_sum += g.mean_loss * static_cast<double>(len);
            for (std::size_t ti = 0; ti < params.tensors().size(); ++ti) {
                Tensor& w = params.tensors()[ti].value;
                Tensor& v = velocity.tensors()[ti].value;
                const Tensor& gt = g.grads[ti].value;
                for (std::size_t i = 0; i < w.data.size(); ++i) {
                    v.data[i] = cfg.momentum * v.data[i] + gt.data[i];
                    w.data[i] -= cfg.learning_rate * v.data[i];
                }
            }
        }
        history.push_back(loss_sum / static_cast<double>(n));
    }
    return {std::move(params), std::move(history)};
}

TrainResult train(const Dataset& dataset, const ModelSpec& spec, const TrainConfig& cfg) {
    std::vector<int> indices(dataset.size());
    std::iota(indices.begin(), indices.end(), 0);
    return train_subset(dataset, indices, spec, cfg);
}

// ---------------------------------------------------------------------------
// Checkpoints: ASCII header, then little-endian float32 payload.

namespace {
constexpr const char* kMagic = "CMIX1";
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write '" + path + "'");
    const ModelSpec& s = params.spec();
    out << kMagic << "\n";
    out << "arch " << arch_name(s.arch) << "\n";
    out << "input " << s.input_h << " " << s.input_w << " " << s.input_c << "\n";
    out << "classes " << s.num_classes << "\n";
    out << "tensors " << params.tensors().size() << "\n";
    for (const NamedTensor& nt : params.tensors()) {
        out << nt.name << " " << nt.value.shape.size();
        for (int d : nt.value.shape) out << " " << d;
        out << "\n";
    }
    out << "end\n";
    for (const NamedTensor& nt : params.tensors()) {
        for (double v : nt.value.data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof(bits));
            const unsigned char le[4] = {
                static_cast<unsigned char>(bits & 0xFF),
                static_cast<unsigned char>((bits >> 8) & 0xFF),
                static_cast<unsigned char>((bits >> 16) & 0xFF),
                static_cast<unsigned char>((bits >> 24) & 0xFF)};
            out.write(reinterpret_cast<const char*>(le), 4);
        }
    }
    if (!out) throw UsageError("write failed for '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos)
            throw FormatError("'" + path + "': unterminated header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    if (next_line() != kMagic)
        throw FormatError("'" + path + "': bad magic, expected " + std::string(kMagic));

    std::string arch_str;
    ModelSpec spec;
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key >> arch_str;
        if (key != "arch" || arch_str.empty())
            throw FormatError("'" + path + "': missing arch line");
        const std::optional<Arch> a = arch_from_name(arch_str);
        if (!a) throw UnsupportedArchError("'" + path + "': unsupported arch '" + arch_str + "'");
        spec.arch = *a;
    }
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key >> spec.input_h >> spec.input_w >> spec.input_c;
        if (key != "input" || !ls) throw FormatError("'" + path + "': missing input line");
    }
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key >> spec.num_classes;
        if (key != "classes" || !ls) throw FormatError("'" + path + "': missing classes line");
    }
    spec.validate();

    std::size_t tensor_count = 0;
    {
        std::istringstream ls(next_line());
        std::string key;
        ls >> key >> tensor_count;
        if (key != "tensors" || !ls) throw FormatError("'" + path + "': missing tensors line");
    }

    const std::vector<TensorDef> defs = tensor_defs(spec);
    if (tensor_count != defs.size())
        throw IntegrityError("'" + path + "': tensor count " + std::to_string(tensor_count) +
                             " does not match arch (expected " + std::to_string(defs.size()) +
                             ")");

    std::vector<NamedTensor> tensors;
    tensors.reserve(defs.size());
    for (const TensorDef& def : defs) {
        std::istringstream ls(next_line());
        std::string name;
        std::size_t ndim = 0;
        ls >> name >> ndim;
        if (!ls || name != def.name)
            throw IntegrityError("'" + path + "': expected tensor '" + def.name + "', got '" +
                                 name + "'");
        std::vector<int> shape(ndim);
        for (std::size_t i = 0; i < ndim; ++i) ls >> shape[i];
        if (!ls || shape != def.shape)
            throw IntegrityError("'" + path + "': shape mismatch for tensor '" + name + "'");
        tensors.push_back({name, Tensor(shape)});
    }
    if (next_line() != "end") throw FormatError("'" + path + "': missing end marker");

    std::size_t total = 0;
    for (const NamedTensor& nt : tensors) total += nt.value.data.size();
    if (bytes.size() - pos != total * 4)
        throw IntegrityError("'" + path + "': payload is " + std::to_string(bytes.size() - pos) +
                             " bytes, expected " + std::to_string(total * 4));

    for (NamedTensor& nt : tensors) {
        for (double& v : nt.value.data) {
            std::uint32_t bits = static_cast<unsigned char>(bytes[pos]) |
                                 (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 1])) << 8) |
                                 (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 2])) << 16) |
                                 (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + 3])) << 24);
            float f;
            std::memcpy(&f, &bits, sizeof(f));
            v = static_cast<double>(f);
            pos += 4;
        }
    }

    ModelParams params(spec, 0);
    params.tensors() = std::move(tensors);
    return params;
}

ModelParams quantize_to_f32(const ModelParams& params) {
    ModelParams out = params;
    for (NamedTensor& nt : out.tensors())
        for (double& v : nt.value.data) v = static_cast<double>(static_cast<float>(v));
    return out;
}

}  // namespace cardiomix
