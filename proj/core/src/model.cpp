#include "kcal/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "kcal/checksum.hpp"
#include "kcal/error.hpp"
#include "kcal/parallel.hpp"
#include "kcal/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob IO assumes a little-endian host");

namespace kcal {
namespace {

void init_uniform(std::vector<float>& values, int fan_in, SplitMix64& rng) {
    double bound = std::sqrt(3.0 / fan_in);
    for (auto& v : values) v = static_cast<float>(rng.next_uniform(-bound, bound));
}

// ---- per-sample forward trace ----------------------------------------

struct SampleTrace {
    std::vector<Tensor3> pre_act; // conv output per block, before ReLU
    std::vector<Tensor3> pooled;  // block output after 2x2 average pool
    std::vector<double> gap;      // K
    std::vector<double> logits;   // units
    std::vector<double> probs;    // classification only
};

void conv3x3_same(const Tensor3& in, const ConvBlock& blk, Tensor3& out) {
    const int h = in.h, w = in.w, cin = blk.c_in, cout = blk.c_out;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* out_px = out.pixel(y, x);
            for (int co = 0; co < cout; ++co) {
                double acc = blk.bias[static_cast<std::size_t>(co)];
                for (int ky = 0; ky < 3; ++ky) {
                    int iy = y + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        int ix = x + kx - 1;
                        if (ix < 0 || ix >= w) continue;
                        const double* in_px = in.pixel(iy, ix);
                        const float* wrow =
                            &blk.weight[(static_cast<std::size_t>(co) * 9 +
                                         static_cast<std::size_t>(ky) * 3 + kx) *
                                        cin];
                        for (int ci = 0; ci < cin; ++ci) acc += wrow[ci] * in_px[ci];
                    }
                }
                out_px[co] = acc;
            }
        }
    }
}

void avg_pool2(const Tensor3& in, Tensor3& out) {
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            const double* a = in.pixel(2 * y, 2 * x);
            const double* b = in.pixel(2 * y, 2 * x + 1);
            const double* c = in.pixel(2 * y + 1, 2 * x);
            const double* d = in.pixel(2 * y + 1, 2 * x + 1);
            double* o = out.pixel(y, x);
            for (int ch = 0; ch < in.c; ++ch) o[ch] = 0.25 * (a[ch] + b[ch] + c[ch] + d[ch]);
        }
    }
}

SampleTrace forward_sample(const ModelGraph& model, const Tensor3& image) {
    if (image.h != model.spec.input_h || image.w != model.spec.input_w ||
        image.c != model.spec.input_c)
        fail(errc::shape_mismatch, "input is " + std::to_string(image.h) + "x" +
                                       std::to_string(image.w) + "x" + std::to_string(image.c) +
                                       ", model expects " + std::to_string(model.spec.input_h) +
                                       "x" + std::to_string(model.spec.input_w) + "x" +
                                       std::to_string(model.spec.input_c));

    SampleTrace t;
    const Tensor3* cur = &image;
    int h = image.h, w = image.w;
    for (const ConvBlock& blk : model.blocks) {
        Tensor3 z(h, w, blk.c_out);
        conv3x3_same(*cur, blk, z);

        Tensor3 a(h, w, blk.c_out);
        for (std::size_t i = 0; i < z.size(); ++i) a.v[i] = z.v[i] > 0.0 ? z.v[i] : 0.0;

        h /= 2;
        w /= 2;
        Tensor3 p(h, w, blk.c_out);
        avg_pool2(a, p);

        t.pre_act.push_back(std::move(z));
        t.pooled.push_back(std::move(p));
        cur = &t.pooled.back();
    }

    const Tensor3& fm = t.pooled.back();
    const int k = fm.c;
    t.gap.assign(static_cast<std::size_t>(k), 0.0);
    for (int y = 0; y < fm.h; ++y)
        for (int x = 0; x < fm.w; ++x) {
            const double* px = fm.pixel(y, x);
            for (int ch = 0; ch < k; ++ch) t.gap[static_cast<std::size_t>(ch)] += px[ch];
        }
    double inv_cells = 1.0 / (static_cast<double>(fm.h) * fm.w);
    for (auto& g : t.gap) g *= inv_cells;

    const Head& head = model.head;
    t.logits.assign(static_cast<std::size_t>(head.units), 0.0);
    for (int u = 0; u < head.units; ++u) {
        double acc = head.bias[static_cast<std::size_t>(u)];
        const float* wrow = &head.weight[static_cast<std::size_t>(u) * k];
        for (int ch = 0; ch < k; ++ch) acc += wrow[ch] * t.gap[static_cast<std::size_t>(ch)];
        t.logits[static_cast<std::size_t>(u)] = acc;
    }

    if (head.kind == HeadKind::classification) {
        double mx = *std::max_element(t.logits.begin(), t.logits.end());
        t.probs.resize(t.logits.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < t.logits.size(); ++i) {
            t.probs[i] = std::exp(t.logits[i] - mx);
            sum += t.probs[i];
        }
        for (auto& p : t.probs) p /= sum;
    }
    return t;
}

// ---- min-max normalization with bookkeeping for its backward pass ----

struct MsmTrace {
    FloatMap raw;  // weighted sum of feature maps
    FloatMap norm; // min-max normalized (zeros when raw is constant)
    std::size_t argmin = 0;
    std::size_t argmax = 0;
    double range = 0.0;
};

MsmTrace msm_from_features(const Tensor3& fm, const Head& head) {
    MsmTrace t;
    t.raw = FloatMap(fm.h, fm.w);
    for (int y = 0; y < fm.h; ++y)
        for (int x = 0; x < fm.w; ++x) {
            const double* px = fm.pixel(y, x);
            double acc = 0.0;
            for (int ch = 0; ch < fm.c; ++ch) acc += head.weight[static_cast<std::size_t>(ch)] * px[ch];
            t.raw.at(y, x) = acc;
        }

    // first occurrence in row-major order keeps the backward pass deterministic
    for (std::size_t i = 1; i < t.raw.size(); ++i) {
        if (t.raw.v[i] < t.raw.v[t.argmin]) t.argmin = i;
        if (t.raw.v[i] > t.raw.v[t.argmax]) t.argmax = i;
    }
    t.range = t.raw.v[t.argmax] - t.raw.v[t.argmin];

    t.norm = FloatMap(fm.h, fm.w, 0.0);
    if (t.range > 0.0) {
        double lo = t.raw.v[t.argmin];
        double inv = 1.0 / t.range;
        for (std::size_t i = 0; i < t.raw.size(); ++i) t.norm.v[i] = (t.raw.v[i] - lo) * inv;
    }
    return t;
}

// d(loss)/d(raw map) given d(loss)/d(normalized map). Constant maps use the
// zero subgradient of the all-zeros rule.
FloatMap minmax_backward(const FloatMap& g_norm, const MsmTrace& t) {
    FloatMap g_raw(g_norm.rows, g_norm.cols, 0.0);
    if (t.range <= 0.0) return g_raw;
    double g_sum = 0.0;
    double gn_sum = 0.0; // sum of g * normalized value
    for (std::size_t i = 0; i < g_norm.size(); ++i) {
        g_sum += g_norm.v[i];
        gn_sum += g_norm.v[i] * t.norm.v[i];
    }
    double inv = 1.0 / t.range;
    for (std::size_t i = 0; i < g_norm.size(); ++i) g_raw.v[i] = g_norm.v[i] * inv;
    g_raw.v[t.argmin] += (gn_sum - g_sum) * inv;
    g_raw.v[t.argmax] -= gn_sum * inv;
    return g_raw;
}

// ---- per-sample backward ----------------------------------------------

struct GradAccum {
    std::vector<std::vector<double>> by_param;
    explicit GradAccum(const ModelGraph& model) {
        for (auto view : model.params()) by_param.emplace_back(view.values->size(), 0.0);
    }
};

// d_logits: d(total)/d(logits) for this sample. g_norm: d(total)/d(MSM),
// empty when the loss has no saliency term.
void backward_sample(const ModelGraph& model, const Tensor3& image, const SampleTrace& trace,
                     const std::vector<double>& d_logits, const FloatMap& g_norm,
                     const MsmTrace* msm, GradAccum& acc) {
    const Head& head = model.head;
    const Tensor3& fm = trace.pooled.back();
    const int k = fm.c;
    const int nblocks = static_cast<int>(model.blocks.size());
    const std::size_t head_w = static_cast<std::size_t>(nblocks) * 2;
    const std::size_t head_b = head_w + 1;

    Tensor3 g_fm(fm.h, fm.w, k, 0.0);

    // prediction path: head grads + GAP backward
    double inv_cells = 1.0 / (static_cast<double>(fm.h) * fm.w);
    for (int u = 0; u < head.units; ++u) {
        double du = d_logits[static_cast<std::size_t>(u)];
        acc.by_param[head_b][static_cast<std::size_t>(u)] += du;
        const float* wrow = &head.weight[static_cast<std::size_t>(u) * k];
        for (int ch = 0; ch < k; ++ch)
            acc.by_param[head_w][static_cast<std::size_t>(u) * k + ch] +=
                du * trace.gap[static_cast<std::size_t>(ch)];
        for (int y = 0; y < fm.h; ++y)
            for (int x = 0; x < fm.w; ++x) {
                double* g_px = g_fm.pixel(y, x);
                for (int ch = 0; ch < k; ++ch) g_px[ch] += du * wrow[ch] * inv_cells;
            }
    }

    // saliency path: through the normalization into both head weights and
    // feature maps
    if (g_norm.size() > 0 && msm != nullptr) {
        FloatMap g_raw = minmax_backward(g_norm, *msm);
        for (int y = 0; y < fm.h; ++y)
            for (int x = 0; x < fm.w; ++x) {
                double gr = g_raw.at(y, x);
                if (gr == 0.0) continue;
                const double* px = fm.pixel(y, x);
                double* g_px = g_fm.pixel(y, x);
                for (int ch = 0; ch < k; ++ch) {
                    acc.by_param[head_w][static_cast<std::size_t>(ch)] += gr * px[ch];
                    g_px[ch] += gr * head.weight[static_cast<std::size_t>(ch)];
                }
            }
    }

    // backbone
    Tensor3 g_out = std::move(g_fm);
    for (int b = nblocks - 1; b >= 0; --b) {
        const ConvBlock& blk = model.blocks[static_cast<std::size_t>(b)];
        const Tensor3& z = trace.pre_act[static_cast<std::size_t>(b)];
        const Tensor3& input = b == 0 ? image : trace.pooled[static_cast<std::size_t>(b) - 1];
        const int h = z.h, w = z.w;

        // pool backward + ReLU mask
        Tensor3 g_z(h, w, blk.c_out, 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double* go = g_out.pixel(y / 2, x / 2);
                const double* zp = z.pixel(y, x);
                double* gz = g_z.pixel(y, x);
                for (int ch = 0; ch < blk.c_out; ++ch)
                    gz[ch] = zp[ch] > 0.0 ? 0.25 * go[ch] : 0.0;
            }

        Tensor3 g_in(h, w, blk.c_in, 0.0);
        auto& gw = acc.by_param[static_cast<std::size_t>(b) * 2];
        auto& gb = acc.by_param[static_cast<std::size_t>(b) * 2 + 1];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double* gz_px = g_z.pixel(y, x);
                for (int co = 0; co < blk.c_out; ++co) {
                    double g = gz_px[co];
                    if (g == 0.0) continue;
                    gb[static_cast<std::size_t>(co)] += g;
                    for (int ky = 0; ky < 3; ++ky) {
                        int iy = y + ky - 1;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            int ix = x + kx - 1;
                            if (ix < 0 || ix >= w) continue;
                            std::size_t wbase = (static_cast<std::size_t>(co) * 9 +
                                                 static_cast<std::size_t>(ky) * 3 + kx) *
                                                blk.c_in;
                            const double* in_px = input.pixel(iy, ix);
                            double* gi_px = g_in.pixel(iy, ix);
                            const float* wrow = &blk.weight[wbase];
                            double* gw_row = &gw[wbase];
                            for (int ci = 0; ci < blk.c_in; ++ci) {
                                gw_row[ci] += g * in_px[ci];
                                gi_px[ci] += g * wrow[ci];
                            }
                        }
                    }
                }
            }
        }
        g_out = std::move(g_in);
    }
}

struct BatchEval {
    std::vector<SampleTrace> traces;
    std::vector<MsmTrace> msms; // only filled for cyborg losses
    LossValue loss;
};

BatchEval eval_batch(const ModelGraph& model, const Batch& batch, const LossSpec& spec,
                     int threads) {
    const std::size_t n = batch.images.size();
    if (n == 0) fail(errc::empty_input, "empty batch");

    const bool classify = model.head.kind == HeadKind::classification;
    if (classify && spec.kind != LossKind::cross_entropy)
        fail(errc::head_mismatch, "classification heads train with cross_entropy");
    if (!classify && spec.kind == LossKind::cross_entropy)
        fail(errc::head_mismatch, "cross_entropy needs a classification head");
    if (classify) {
        if (batch.class_targets.size() != n)
            fail(errc::shape_mismatch, "class target count does not match batch");
    } else if (batch.targets.size() != n) {
        fail(errc::shape_mismatch, "target count does not match batch");
    }
    if (spec.is_cyborg()) {
        if (model.head.kind != HeadKind::regression)
            fail(errc::head_mismatch, "cyborg losses need a regression head");
        if (batch.hsms.size() != n)
            fail(errc::missing_hsm, "cyborg loss requires one HSM per sample");
    }

    BatchEval ev;
    ev.traces.resize(n);
    parallel_for(n, threads,
                 [&](std::size_t i) { ev.traces[i] = forward_sample(model, batch.images[i]); });

    const double inv_n = 1.0 / static_cast<double>(n);
    if (classify) {
        double ce = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int cls = batch.class_targets[i];
            if (cls < 0 || cls >= model.head.units)
                fail(errc::index_out_of_range, "class index out of range");
            ce += -std::log(std::max(ev.traces[i].probs[static_cast<std::size_t>(cls)], 1e-12));
        }
        ev.loss.l_c = ce * inv_n;
    } else {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = ev.traces[i].logits[0] - batch.targets[i];
            acc += d * d;
        }
        ev.loss.l_c = acc * inv_n;
    }

    if (spec.is_cyborg()) {
        ev.msms.resize(n);
        parallel_for(n, threads, [&](std::size_t i) {
            ev.msms[i] = msm_from_features(ev.traces[i].pooled.back(), model.head);
        });
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const FloatMap& hsm = batch.hsms[i];
            if (!ev.msms[i].norm.same_dims(hsm))
                fail(errc::dim_mismatch,
                     "HSM dims " + std::to_string(hsm.rows) + "x" + std::to_string(hsm.cols) +
                         " do not match feature maps " + std::to_string(ev.msms[i].norm.rows) +
                         "x" + std::to_string(ev.msms[i].norm.cols));
            acc += saliency_loss(ev.msms[i].norm, hsm);
        }
        ev.loss.l_m = acc * inv_n;
    }

    switch (spec.kind) {
        case LossKind::mse:
        case LossKind::cross_entropy: ev.loss.total = ev.loss.l_c; break;
        case LossKind::cyborg_weighted:
            ev.loss.total = cyborg_weighted(ev.loss.l_m, ev.loss.l_c, spec.alpha);
            break;
        case LossKind::cyborg_multiplied:
            ev.loss.total = cyborg_multiplied(ev.loss.l_m, ev.loss.l_c);
            break;
    }
    if (!std::isfinite(ev.loss.total))
        fail(errc::non_finite_loss, "loss is not finite");
    return ev;
}

} // namespace

void BackboneSpec::validate() const {
    if (channels.empty()) fail(errc::invalid_config, "backbone needs at least one conv block");
    for (int c : channels)
        if (c < 1) fail(errc::invalid_config, "conv channel counts must be positive");
    if (input_c < 1 || input_h < 1 || input_w < 1)
        fail(errc::invalid_config, "input dims must be positive");
    int div = 1 << blocks();
    if (input_h % div != 0 || input_w % div != 0 || input_h / div < 1 || input_w / div < 1)
        fail(errc::invalid_config,
             "input dims must be divisible by 2^blocks with at least 1x1 feature maps");
}

std::string BackboneSpec::describe() const {
    std::string s = "tinycnn-";
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(channels[i]);
    }
    s += '/' + std::to_string(input_h) + 'x' + std::to_string(input_w);
    return s;
}

Head make_head(HeadKind kind, int units, int in_features, std::uint64_t seed) {
    if (kind == HeadKind::regression && units != 1)
        fail(errc::invalid_config, "regression heads have exactly one output unit");
    if (kind == HeadKind::classification && units < 2)
        fail(errc::invalid_config, "classification heads need at least 2 units");
    Head h;
    h.kind = kind;
    h.units = units;
    h.in_features = in_features;
    h.weight.assign(static_cast<std::size_t>(units) * in_features, 0.0f);
    h.bias.assign(static_cast<std::size_t>(units), 0.0f);
    SplitMix64 rng(seed);
    init_uniform(h.weight, in_features, rng);
    return h;
}

std::vector<ParamView> ModelGraph::params() {
    std::vector<ParamView> out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        std::string base = "conv" + std::to_string(b + 1);
        out.push_back({base + ".weight", {blocks[b].c_out, 3, 3, blocks[b].c_in}, &blocks[b].weight});
        out.push_back({base + ".bias", {blocks[b].c_out}, &blocks[b].bias});
    }
    out.push_back({"head.weight", {head.units, head.in_features}, &head.weight});
    out.push_back({"head.bias", {head.units}, &head.bias});
    return out;
}

std::vector<ConstParamView> ModelGraph::params() const {
    std::vector<ConstParamView> out;
    auto views = const_cast<ModelGraph*>(this)->params();
    out.reserve(views.size());
    for (auto& v : views) out.push_back({v.name, v.shape, v.values});
    return out;
}

std::size_t ModelGraph::param_count() const {
    std::size_t n = 0;
    for (auto v : params()) n += v.values->size();
    return n;
}

std::uint64_t ModelGraph::backbone_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const std::vector<float>& vals) {
        for (float f : vals) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int i = 0; i < 4; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    };
    for (const auto& blk : blocks) {
        mix(blk.weight);
        mix(blk.bias);
    }
    return h;
}

std::uint64_t ModelGraph::checksum() const {
    std::uint64_t h = backbone_checksum();
    auto mix = [&](const std::vector<float>& vals) {
        for (float f : vals) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int i = 0; i < 4; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    };
    mix(head.weight);
    mix(head.bias);
    return h;
}

ModelGraph make_model(const BackboneSpec& spec, HeadKind kind, int units, std::uint64_t seed) {
    spec.validate();
    ModelGraph m;
    m.spec = spec;
    SplitMix64 rng(seed);
    int c_in = spec.input_c;
    for (int c_out : spec.channels) {
        ConvBlock blk;
        blk.c_in = c_in;
        blk.c_out = c_out;
        blk.weight.assign(static_cast<std::size_t>(c_out) * 9 * c_in, 0.0f);
        blk.bias.assign(static_cast<std::size_t>(c_out), 0.0f);
        init_uniform(blk.weight, 9 * c_in, rng);
        m.blocks.push_back(std::move(blk));
        c_in = c_out;
    }
    m.head = make_head(kind, units, spec.feature_channels(), rng.next());
    return m;
}

ForwardResult forward(const ModelGraph& model, std::span<const Tensor3> batch, int threads) {
    ForwardResult out;
    out.predictions.resize(batch.size());
    out.feature_maps.resize(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) {
        SampleTrace t = forward_sample(model, batch[i]);
        out.predictions[i] =
            model.head.kind == HeadKind::classification ? t.probs : t.logits;
        out.feature_maps[i] = std::move(t.pooled.back());
    });
    return out;
}

BackwardResult backward(const ModelGraph& model, const Batch& batch, const LossSpec& spec,
                        int threads) {
    BatchEval ev = eval_batch(model, batch, spec, threads);
    const std::size_t n = batch.images.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    // d(total)/d(L_c) and d(total)/d(L_m)
    double wc = 1.0, wm = 0.0;
    switch (spec.kind) {
        case LossKind::mse:
        case LossKind::cross_entropy: wc = 1.0; wm = 0.0; break;
        case LossKind::cyborg_weighted: wc = spec.alpha; wm = 1.0 - spec.alpha; break;
        case LossKind::cyborg_multiplied: wc = ev.loss.l_m; wm = ev.loss.l_c; break;
    }

    const bool classify = model.head.kind == HeadKind::classification;
    std::vector<GradAccum> per_sample(n, GradAccum(model));
    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<double> d_logits(static_cast<std::size_t>(model.head.units), 0.0);
        if (classify) {
            // fused softmax + cross-entropy
            for (int u = 0; u < model.head.units; ++u)
                d_logits[static_cast<std::size_t>(u)] =
                    wc * (ev.traces[i].probs[static_cast<std::size_t>(u)] -
                          (u == batch.class_targets[i] ? 1.0 : 0.0)) *
                    inv_n;
        } else {
            d_logits[0] = wc * 2.0 * (ev.traces[i].logits[0] - batch.targets[i]) * inv_n;
        }

        FloatMap g_norm;
        const MsmTrace* msm = nullptr;
        if (spec.is_cyborg()) {
            msm = &ev.msms[i];
            const FloatMap& hsm = batch.hsms[i];
            double cell_scale = wm * 2.0 * inv_n / static_cast<double>(hsm.size());
            g_norm = FloatMap(hsm.rows, hsm.cols);
            for (std::size_t j = 0; j < hsm.size(); ++j)
                g_norm.v[j] = cell_scale * (ev.msms[i].norm.v[j] - hsm.v[j]);
        }
        backward_sample(model, batch.images[i], ev.traces[i], d_logits, g_norm, msm,
                        per_sample[i]);
    });

    BackwardResult out;
    out.loss = ev.loss;
    out.grads.by_param.clear();
    for (auto view : model.params()) out.grads.by_param.emplace_back(view.values->size(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < out.grads.by_param.size(); ++p)
            for (std::size_t j = 0; j < out.grads.by_param[p].size(); ++j)
                out.grads.by_param[p][j] += per_sample[i].by_param[p][j];
    return out;
}

LossValue batch_loss(const ModelGraph& model, const Batch& batch, const LossSpec& spec,
                     int threads) {
    return eval_batch(model, batch, spec, threads).loss;
}

SaliencyMap extract_msm(const Tensor3& feature_maps, const Head& head) {
    if (head.kind != HeadKind::regression || head.units != 1)
        fail(errc::head_mismatch, "MSM extraction needs the 1-unit regression head");
    if (head.in_features != feature_maps.c)
        fail(errc::head_mismatch, "head reads " + std::to_string(head.in_features) +
                                      " channels, feature maps have " +
                                      std::to_string(feature_maps.c));
    MsmTrace t = msm_from_features(feature_maps, head);
    return SaliencyMap{std::move(t.norm), Provenance::model};
}

ModelGraph swap_head(const ModelGraph& model, Head new_head) {
    if (new_head.in_features != model.spec.feature_channels())
        fail(errc::dimension_mismatch,
             "new head reads " + std::to_string(new_head.in_features) +
                 " features, backbone provides " +
                 std::to_string(model.spec.feature_channels()));
    if (new_head.weight.size() !=
            static_cast<std::size_t>(new_head.units) * new_head.in_features ||
        new_head.bias.size() != static_cast<std::size_t>(new_head.units))
        fail(errc::dimension_mismatch, "head parameter arrays do not match its dims");
    ModelGraph out = model;
    out.head = std::move(new_head);
    return out;
}

// ---- checkpoint IO ------------------------------------------------------

void save_checkpoint(const ModelGraph& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
    nlohmann::json header;
    header["format_version"] = 1;
    header["arch"] = {
        {"input", {model.spec.input_h, model.spec.input_w, model.spec.input_c}},
        {"channels", model.spec.channels},
        {"head",
         {{"kind", model.head.kind == HeadKind::regression ? "regression" : "classification"},
          {"units", model.head.units}}}};
    header["metadata"] = {{"task", meta.task},
                          {"epoch", meta.epoch},
                          {"validation_metric", meta.validation_metric},
                          {"class_labels", meta.class_labels}};

    nlohmann::json params = nlohmann::json::array();
    std::size_t offset = 0;
    for (auto view : model.params()) {
        params.push_back({{"name", view.name}, {"shape", view.shape}, {"offset", offset}});
        offset += view.values->size();
    }
    header["params"] = std::move(params);

    std::string hbytes = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::unwritable_path, "cannot write checkpoint: " + path.string());
    std::uint32_t len = static_cast<std::uint32_t>(hbytes.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(hbytes.data(), static_cast<std::streamsize>(hbytes.size()));
    for (auto view : model.params())
        out.write(reinterpret_cast<const char*>(view.values->data()),
                  static_cast<std::streamsize>(view.values->size() * 4));
    if (!out) fail(errc::unwritable_path, "short write: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::missing_file, "checkpoint not found: " + path.string());

    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in || len == 0 || len > (1u << 24))
        fail(errc::corrupt_checkpoint, "bad header length in " + path.string());
    std::string hbytes(len, '\0');
    in.read(hbytes.data(), len);
    if (!in) fail(errc::corrupt_checkpoint, "truncated header in " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hbytes);
    } catch (const nlohmann::json::exception& e) {
        fail(errc::corrupt_checkpoint, std::string("bad header JSON: ") + e.what());
    }

    try {
        if (header.at("format_version").get<int>() != 1)
            fail(errc::version_mismatch,
                 "unsupported checkpoint format_version " +
                     header["format_version"].dump());

        const auto& arch = header.at("arch");
        if (arch.at("head").at("kind").get<std::string>() == "ensemble")
            fail(errc::corrupt_checkpoint, "this is an ensemble checkpoint");

        BackboneSpec spec;
        spec.input_h = arch.at("input").at(0).get<int>();
        spec.input_w = arch.at("input").at(1).get<int>();
        spec.input_c = arch.at("input").at(2).get<int>();
        spec.channels = arch.at("channels").get<std::vector<int>>();
        HeadKind kind = arch.at("head").at("kind").get<std::string>() == "regression"
                            ? HeadKind::regression
                            : HeadKind::classification;
        int units = arch.at("head").at("units").get<int>();

        LoadedCheckpoint out;
        out.model = make_model(spec, kind, units, 0);

        const auto& meta = header.at("metadata");
        out.meta.task = meta.at("task").get<std::string>();
        out.meta.epoch = meta.at("epoch").get<int>();
        out.meta.validation_metric = meta.at("validation_metric").get<double>();
        out.meta.class_labels = meta.at("class_labels").get<std::vector<std::string>>();

        auto views = out.model.params();
        const auto& params = header.at("params");
        if (params.size() != views.size())
            fail(errc::corrupt_checkpoint, "unexpected parameter table size");
        std::size_t offset = 0;
        for (std::size_t i = 0; i < views.size(); ++i) {
            if (params.at(i).at("name").get<std::string>() != views[i].name ||
                params.at(i).at("shape").get<std::vector<int>>() != views[i].shape ||
                params.at(i).at("offset").get<std::size_t>() != offset)
                fail(errc::corrupt_checkpoint, "parameter table mismatch at " + views[i].name);
            offset += views[i].values->size();
        }

        for (auto& view : views) {
            in.read(reinterpret_cast<char*>(view.values->data()),
                    static_cast<std::streamsize>(view.values->size() * 4));
            if (!in) fail(errc::corrupt_checkpoint, "truncated blob in " + path.string());
        }
        char extra;
        if (in.read(&extra, 1))
            fail(errc::corrupt_checkpoint, "trailing bytes in " + path.string());
        return out;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::corrupt_checkpoint, std::string("bad checkpoint header: ") + e.what());
    }
}

} // namespace kcal
