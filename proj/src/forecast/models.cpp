#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "csoeval/error.hpp"
#include "csoeval/forecast.hpp"
#include "csoeval/kernels.hpp"
#include "csoeval/plugin.hpp"
#include "csoeval/rng.hpp"

namespace csoeval {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

std::string_view family_name(Family family) {
    switch (family) {
        case Family::persistence: return "persistence";
        case Family::seasonal_naive: return "seasonal_naive";
        case Family::linear_direct: return "linear_direct";
        case Family::linear_recursive: return "linear_recursive";
        case Family::mlp_direct: return "mlp_direct";
        case Family::external_plugin: return "external_plugin";
    }
    return "persistence";
}

Family parse_family(std::string_view text) {
    for (Family f : {Family::persistence, Family::seasonal_naive, Family::linear_direct, Family::linear_recursive,
                     Family::mlp_direct, Family::external_plugin})
        if (family_name(f) == text) return f;
    throw Error(ErrorCode::parse, "unknown model family '" + std::string(text) + "'");
}

namespace {

// Flat parameter block of the learned families:
//   [feature mean (d) | feature scale (d) | target mean (o) | target scale (o) | weights...]
struct Blocks {
    std::size_t mean, scale, ymean, yscale, weights;
};

Blocks blocks(const ModelShape& s) {
    return {0, s.inputs, 2 * s.inputs, 2 * s.inputs + s.outputs, 2 * s.inputs + 2 * s.outputs};
}

std::size_t feature_dim(Family family, const Layout& layout) {
    const std::size_t in = layout.input_len * layout.input_features();
    return family == Family::linear_recursive ? in + layout.future_features()
                                              : in + layout.horizon * layout.future_features();
}

}  // namespace

ForecasterHandle::ForecasterHandle(Family family, Layout layout, ModelShape shape, std::vector<double> params,
                                   std::uint64_t seed)
    : family_(family), layout_(std::move(layout)), shape_(shape), params_(std::move(params)), seed_(seed) {}

ForecasterHandle ForecasterHandle::plugin(std::vector<std::string> command, Layout layout,
                                          std::uint64_t declared_size, std::uint64_t seed) {
    ForecasterHandle h(Family::external_plugin, std::move(layout), {}, {}, seed);
    h.command_ = std::move(command);
    h.declared_size_ = declared_size;
    return h;
}

std::size_t ForecasterHandle::param_count() const {
    switch (family_) {
        case Family::linear_direct:
        case Family::linear_recursive: return shape_.outputs * shape_.inputs + shape_.outputs;
        case Family::mlp_direct: return mlp::offsets(shape_.inputs, shape_.hidden, shape_.outputs).total;
        default: return 0;
    }
}

std::size_t ForecasterHandle::serialized_size() const {
    if (family_ == Family::external_plugin) return declared_size_;
    return serialize().size();
}

// ---- serialization ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'S', 'O', 'F'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_string(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
    void put_strings(const std::vector<std::string>& v) {
        put<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
        for (const auto& s : v) put_string(s);
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::vector<std::string> get_strings() {
        const auto n = get<std::uint32_t>();
        std::vector<std::string> v;
        for (std::uint32_t i = 0; i < n; ++i) v.push_back(get_string());
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw Error(ErrorCode::parse, "truncated model blob");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> ForecasterHandle::serialize() const {
    Writer w;
    for (char c : kMagic) w.put<char>(c);
    w.put<std::uint32_t>(kFormatVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(family_));
    w.put<std::uint64_t>(seed_);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layout_.input_len));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layout_.horizon));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layout_.mode));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layout_.target_feature));
    w.put_strings(layout_.input_channels);
    w.put_strings(layout_.future_channels);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.inputs));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.hidden));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.outputs));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.season));
    w.put<std::uint64_t>(params_.size());
    for (double p : params_) w.put<double>(p);
    if (family_ == Family::external_plugin) {
        w.put_strings(command_);
        w.put<std::uint64_t>(declared_size_);
    }
    return std::move(w.bytes);
}

ForecasterHandle ForecasterHandle::deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    for (char c : kMagic)
        if (r.get<char>() != c) throw Error(ErrorCode::parse, "not a model blob");
    if (r.get<std::uint32_t>() != kFormatVersion) throw Error(ErrorCode::parse, "unsupported model format version");
    ForecasterHandle h;
    const auto family = r.get<std::uint32_t>();
    if (family > static_cast<std::uint32_t>(Family::external_plugin)) throw Error(ErrorCode::parse, "bad family tag");
    h.family_ = static_cast<Family>(family);
    h.seed_ = r.get<std::uint64_t>();
    h.layout_.input_len = r.get<std::uint32_t>();
    h.layout_.horizon = r.get<std::uint32_t>();
    h.layout_.mode = r.get<std::uint32_t>() == 1 ? Mode::local : Mode::global;
    h.layout_.target_feature = r.get<std::uint32_t>();
    h.layout_.input_channels = r.get_strings();
    h.layout_.future_channels = r.get_strings();
    h.shape_.inputs = r.get<std::uint32_t>();
    h.shape_.hidden = r.get<std::uint32_t>();
    h.shape_.outputs = r.get<std::uint32_t>();
    h.shape_.season = r.get<std::uint32_t>();
    const auto n = r.get<std::uint64_t>();
    h.params_.resize(n);
    for (auto& p : h.params_) p = r.get<double>();
    if (h.family_ == Family::external_plugin) {
        h.command_ = r.get_strings();
        h.declared_size_ = r.get<std::uint64_t>();
    }
    if (!r.done()) throw Error(ErrorCode::parse, "trailing bytes in model blob");
    return h;
}

// ---- features --------------------------------------------------------------

void direct_features(const WindowSet& windows, std::size_t w, std::span<double> out) {
    const auto in = windows.input(w);
    const auto fut = windows.future_of(w);
    std::copy(in.begin(), in.end(), out.begin());
    const std::size_t rest = out.size() - in.size();
    std::copy(fut.begin(), fut.begin() + static_cast<std::ptrdiff_t>(rest), out.begin() + static_cast<std::ptrdiff_t>(in.size()));
}

namespace {

struct Standardizer {
    std::vector<double> mean, scale;
};

template <typename RowFn>
Standardizer standardize_stats(std::size_t n, std::size_t d, RowFn&& row) {
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    std::vector<double> x(d);
    for (std::size_t i = 0; i < n; ++i) {
        row(i, std::span<double>(x));
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += x[j];
    }
    for (auto& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        row(i, std::span<double>(x));
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x[j] - s.mean[j];
            s.scale[j] += c * c;
        }
    }
    for (auto& v : s.scale) {
        const double sd = std::sqrt(v / static_cast<double>(n));
        v = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

// In-place Cholesky (lower triangle) of a symmetric positive definite matrix.
void cholesky(std::vector<double>& a, std::size_t n) {
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a[i * n + i]));
    const double tol = 1e-12 * std::max(max_diag, std::numeric_limits<double>::min());
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a[j * n + j] - kernels::dot({a.data() + j * n, j}, {a.data() + j * n, j});
        if (!(diag > tol)) throw Error(ErrorCode::ill_conditioned_fit, "use a ridge penalty > 0");
        diag = std::sqrt(diag);
        a[j * n + j] = diag;
        for (std::size_t i = j + 1; i < n; ++i) {
            const double v = a[i * n + j] - kernels::dot({a.data() + i * n, j}, {a.data() + j * n, j});
            a[i * n + j] = v / diag;
        }
    }
}

void cholesky_solve(const std::vector<double>& l, std::size_t n, std::span<double> b) {
    for (std::size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= l[i * n + k] * b[k];
        b[i] = v / l[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double v = b[i];
        for (std::size_t k = i + 1; k < n; ++k) v -= l[k * n + i] * b[k];
        b[i] = v / l[i * n + i];
    }
}

/// Ridge regression on standardized features and centered targets:
/// minimize (1/n)|Z W - Yc|^2 + lambda |W|^2, solved with normal equations.
template <typename RowFn, typename TargetFn>
std::vector<double> fit_ridge(std::size_t n, std::size_t d, std::size_t o, double lambda, RowFn&& row,
                              TargetFn&& target) {
    const Standardizer st = standardize_stats(n, d, row);
    std::vector<double> ymean(o, 0.0);
    std::vector<double> y(o);
    for (std::size_t i = 0; i < n; ++i) {
        target(i, std::span<double>(y));
        for (std::size_t k = 0; k < o; ++k) ymean[k] += y[k];
    }
    for (auto& m : ymean) m /= static_cast<double>(n);

    constexpr std::size_t kBlock = 128;
    std::vector<double> gram(d * d, 0.0);
    std::vector<double> rhs(d * o, 0.0);
    std::vector<double> zt(d * kBlock);
    std::vector<double> yt(o * kBlock);
    std::vector<double> x(d);
    for (std::size_t start = 0; start < n; start += kBlock) {
        const std::size_t rows = std::min(kBlock, n - start);
        for (std::size_t r = 0; r < rows; ++r) {
            row(start + r, std::span<double>(x));
            for (std::size_t j = 0; j < d; ++j) zt[j * rows + r] = (x[j] - st.mean[j]) / st.scale[j];
            target(start + r, std::span<double>(y));
            for (std::size_t k = 0; k < o; ++k) yt[k * rows + r] = y[k] - ymean[k];
        }
        kernels::gram_upper({zt.data(), d * rows}, d, rows, gram);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = 0; k < o; ++k)
                rhs[j * o + k] += kernels::dot({zt.data() + j * rows, rows}, {yt.data() + k * rows, rows});
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            const double v = gram[i * d + j] * inv_n;
            gram[i * d + j] = v;
            gram[j * d + i] = v;
        }
        gram[i * d + i] += lambda;
    }
    cholesky(gram, d);

    ModelShape shape{d, 0, o};
    const Blocks b = blocks(shape);
    std::vector<double> params(b.weights + o * d + o, 0.0);
    std::copy(st.mean.begin(), st.mean.end(), params.begin() + static_cast<std::ptrdiff_t>(b.mean));
    std::copy(st.scale.begin(), st.scale.end(), params.begin() + static_cast<std::ptrdiff_t>(b.scale));
    std::copy(ymean.begin(), ymean.end(), params.begin() + static_cast<std::ptrdiff_t>(b.ymean));
    std::fill_n(params.begin() + static_cast<std::ptrdiff_t>(b.yscale), o, 1.0);
    std::vector<double> col(d);
    for (std::size_t k = 0; k < o; ++k) {
        for (std::size_t j = 0; j < d; ++j) col[j] = rhs[j * o + k] * inv_n;
        cholesky_solve(gram, d, col);
        std::copy(col.begin(), col.end(), params.begin() + static_cast<std::ptrdiff_t>(b.weights + k * d));
    }
    return params;
}

/// Scratch-owning evaluator of the standardized linear / MLP maps.
class Evaluator {
public:
    Evaluator(const ForecasterHandle& h) : h_(h), b_(blocks(h.shape())), z_(h.shape().inputs), hid_(h.shape().hidden) {}

    void run(std::span<const double> x, std::span<double> out) {
        const ModelShape& s = h_.shape();
        const auto p = h_.parameters();
        for (std::size_t j = 0; j < s.inputs; ++j) z_[j] = (x[j] - p[b_.mean + j]) / p[b_.scale + j];
        const auto w = p.subspan(b_.weights);
        if (h_.family() == Family::mlp_direct) {
            const auto off = mlp::offsets(s.inputs, s.hidden, s.outputs);
            kernels::gemv(w.subspan(off.w1, s.hidden * s.inputs), s.hidden, s.inputs, z_, w.subspan(off.b1, s.hidden), hid_);
            for (auto& v : hid_) v = std::tanh(v);
            kernels::gemv(w.subspan(off.w2, s.outputs * s.hidden), s.outputs, s.hidden, hid_, w.subspan(off.b2, s.outputs), out);
        } else {
            kernels::gemv(w.subspan(0, s.outputs * s.inputs), s.outputs, s.inputs, z_,
                          w.subspan(s.outputs * s.inputs, s.outputs), out);
        }
        for (std::size_t k = 0; k < s.outputs; ++k) out[k] = out[k] * p[b_.yscale + k] + p[b_.ymean + k];
    }

private:
    const ForecasterHandle& h_;
    Blocks b_;
    std::vector<double> z_, hid_;
};

double mean_squared(std::span<const double> a, std::span<const double> b) {
    return kernels::sum_sq_diff(a, b) / static_cast<double>(a.size());
}

ForecasterHandle fit_mlp(const WindowSet& train, const WindowSet& val, const TrainConfig& cfg, FitReport* report);

}  // namespace

// ---- fit / predict ---------------------------------------------------------

ForecasterHandle fit(Family family, const WindowSet& train, const WindowSet& val, const TrainConfig& cfg,
                     FitReport* report) {
    if (train.count == 0) throw Error(ErrorCode::insufficient_history, "no training windows");
    if (val.count > 0 && !(val.layout == train.layout))
        throw Error(ErrorCode::schema_mismatch, "train/val layouts differ");
    if (cfg.patience == 0 || !(cfg.adam.lr > 0.0)) throw Error(ErrorCode::invalid_argument, "patience >= 1 and lr > 0 required");
    const Layout& layout = train.layout;
    const std::size_t h = layout.horizon;
    switch (family) {
        case Family::persistence:
            return ForecasterHandle(family, layout, {0, 0, h}, {}, cfg.seed);
        case Family::seasonal_naive:
            return ForecasterHandle(family, layout, {0, 0, h, cfg.season}, {}, cfg.seed);
        case Family::linear_direct: {
            const std::size_t d = feature_dim(family, layout);
            auto params = fit_ridge(
                train.count, d, h, cfg.ridge_lambda,
                [&](std::size_t i, std::span<double> x) { direct_features(train, i, x); },
                [&](std::size_t i, std::span<double> y) {
                    const auto t = train.target(i);
                    std::copy(t.begin(), t.end(), y.begin());
                });
            return ForecasterHandle(family, layout, {d, 0, h}, std::move(params), cfg.seed);
        }
        case Family::linear_recursive: {
            const std::size_t d = feature_dim(family, layout);
            auto params = fit_ridge(
                train.count, d, 1, cfg.ridge_lambda,
                [&](std::size_t i, std::span<double> x) { direct_features(train, i, x); },
                [&](std::size_t i, std::span<double> y) { y[0] = train.target(i)[0]; });
            return ForecasterHandle(family, layout, {d, 0, 1}, std::move(params), cfg.seed);
        }
        case Family::mlp_direct:
            return fit_mlp(train, val, cfg, report);
        case Family::external_plugin:
            break;
    }
    throw Error(ErrorCode::invalid_argument, "external plugins are fitted out of process");
}

namespace {

void predict_recursive(const ForecasterHandle& h, const WindowSet& ws, std::vector<double>& out) {
    const Layout& L = h.layout();
    const std::size_t nf = L.input_features();
    const std::size_t nff = L.future_features();
    const std::size_t stride = ws.input_stride();
    // Input features that receive known values while the window rolls forward.
    std::vector<std::ptrdiff_t> future_slot(nff, -1);
    for (std::size_t f = 0; f < nff; ++f)
        for (std::size_t c = 0; c < nf; ++c)
            if (L.input_channels[c] == L.future_channels[f]) future_slot[f] = static_cast<std::ptrdiff_t>(c);
    std::ptrdiff_t target_flag = -1;
    const std::string flag = L.input_channels[L.target_feature] + std::string(kImputedSuffix);
    for (std::size_t c = 0; c < nf; ++c)
        if (L.input_channels[c] == flag) target_flag = static_cast<std::ptrdiff_t>(c);

    Evaluator eval(h);
    std::vector<double> features(stride + nff);
    double pred = 0.0;
    for (std::size_t w = 0; w < ws.count; ++w) {
        const auto in = ws.input(w);
        const auto fut = ws.future_of(w);
        std::copy(in.begin(), in.end(), features.begin());
        for (std::size_t s = 0; s < L.horizon; ++s) {
            std::copy(fut.begin() + static_cast<std::ptrdiff_t>(s * nff),
                      fut.begin() + static_cast<std::ptrdiff_t>((s + 1) * nff),
                      features.begin() + static_cast<std::ptrdiff_t>(stride));
            eval.run(features, std::span<double>(&pred, 1));
            out[w * L.horizon + s] = pred;
            if (s + 1 == L.horizon) break;
            // Roll the history one step: unknown covariates carry their last
            // value forward, the target takes the prediction.
            std::copy(features.begin() + static_cast<std::ptrdiff_t>(nf), features.begin() + static_cast<std::ptrdiff_t>(stride),
                      features.begin());
            double* last = features.data() + stride - nf;
            last[L.target_feature] = pred;
            if (target_flag >= 0) last[target_flag] = 0.0;
            for (std::size_t f = 0; f < nff; ++f)
                if (future_slot[f] >= 0) last[future_slot[f]] = fut[s * nff + f];
        }
    }
}

}  // namespace

std::vector<double> predict(const ForecasterHandle& h, const WindowSet& ws) {
    const Layout& L = h.layout();
    if (!(ws.layout == L)) throw Error(ErrorCode::schema_mismatch, "window layout differs from fit-time layout");
    const std::size_t H = L.horizon;
    const std::size_t nf = L.input_features();
    std::vector<double> out(ws.count * H, 0.0);

    switch (h.family()) {
        case Family::persistence:
            for (std::size_t w = 0; w < ws.count; ++w) {
                const auto in = ws.input(w);
                double last = 0.0;
                for (std::size_t l = L.input_len; l-- > 0;) {
                    const std::size_t i = l * nf + L.target_feature;
                    if (!ws.input_missing[w * ws.input_stride() + i]) {
                        last = in[i];
                        break;
                    }
                }
                std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(w * H), H, last);
            }
            break;
        case Family::seasonal_naive: {
            const std::size_t season = std::max<std::size_t>(h.shape().season, 1);
            for (std::size_t w = 0; w < ws.count; ++w) {
                const auto in = ws.input(w);
                for (std::size_t s = 0; s < H; ++s) {
                    // Steps back from the last input to the same phase one or
                    // more seasons earlier than the predicted time.
                    const std::size_t ahead = s + 1;
                    const std::size_t back = season * ((ahead + season - 1) / season) - ahead;
                    const std::size_t l = back < L.input_len ? L.input_len - 1 - back : L.input_len - 1;
                    out[w * H + s] = in[l * nf + L.target_feature];
                }
            }
            break;
        }
        case Family::linear_direct:
        case Family::mlp_direct: {
            Evaluator eval(h);
            std::vector<double> x(h.shape().inputs);
            for (std::size_t w = 0; w < ws.count; ++w) {
                direct_features(ws, w, x);
                eval.run(x, std::span<double>(out).subspan(w * H, H));
            }
            break;
        }
        case Family::linear_recursive:
            predict_recursive(h, ws, out);
            break;
        case Family::external_plugin: {
            PluginClient client(h.plugin_command());
            client.handshake();
            out = client.predict(ws);
            break;
        }
    }
    return out;
}

Complexity measure_complexity(const ForecasterHandle& handle, const WindowSet& probe, std::size_t repeats) {
    if (repeats < 5) throw Error(ErrorCode::invalid_argument, "repeats must be >= 5");
    using clock = std::chrono::steady_clock;
    (void)predict(handle, probe);
    std::vector<double> times;
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = clock::now();
        const auto out = predict(handle, probe);
        const auto t1 = clock::now();
        if (out.size() != probe.count * handle.layout().horizon) throw Error(ErrorCode::invalid_measurement);
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t m = times.size() / 2;
    const double median = times.size() % 2 ? times[m] : 0.5 * (times[m - 1] + times[m]);
    return {median, handle.serialized_size(), handle.param_count()};
}

// ---- MLP -------------------------------------------------------------------

namespace mlp {

Offsets offsets(std::size_t inputs, std::size_t hidden, std::size_t outputs) {
    Offsets o{};
    o.w1 = 0;
    o.b1 = hidden * inputs;
    o.w2 = o.b1 + hidden;
    o.b2 = o.w2 + outputs * hidden;
    o.total = o.b2 + outputs;
    return o;
}

double loss_and_gradient(std::span<const double> params, std::size_t inputs, std::size_t hidden, std::size_t outputs,
                         std::span<const double> x, std::span<const double> y, std::size_t rows,
                         std::span<double> grad) {
    const Offsets off = offsets(inputs, hidden, outputs);
    std::fill(grad.begin(), grad.end(), 0.0);
    const auto w1 = params.subspan(off.w1, hidden * inputs);
    const auto b1 = params.subspan(off.b1, hidden);
    const auto w2 = params.subspan(off.w2, outputs * hidden);
    const auto b2 = params.subspan(off.b2, outputs);
    std::vector<double> act(hidden), out(outputs), g_out(outputs), g_hid(hidden);
    const double norm = 2.0 / static_cast<double>(rows * outputs);
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto xr = x.subspan(r * inputs, inputs);
        const auto yr = y.subspan(r * outputs, outputs);
        kernels::gemv(w1, hidden, inputs, xr, b1, act);
        for (auto& a : act) a = std::tanh(a);
        kernels::gemv(w2, outputs, hidden, act, b2, out);
        std::fill(g_hid.begin(), g_hid.end(), 0.0);
        for (std::size_t k = 0; k < outputs; ++k) {
            const double e = out[k] - yr[k];
            loss += e * e;
            g_out[k] = norm * e;
            grad[off.b2 + k] += g_out[k];
            kernels::axpy(g_out[k], act, grad.subspan(off.w2 + k * hidden, hidden));
            kernels::axpy(g_out[k], w2.subspan(k * hidden, hidden), g_hid);
        }
        for (std::size_t j = 0; j < hidden; ++j) {
            const double ga = g_hid[j] * (1.0 - act[j] * act[j]);
            grad[off.b1 + j] += ga;
            kernels::axpy(ga, xr, grad.subspan(off.w1 + j * inputs, inputs));
        }
    }
    return loss / static_cast<double>(rows * outputs);
}

}  // namespace mlp

namespace {

ForecasterHandle fit_mlp(const WindowSet& train, const WindowSet& val, const TrainConfig& cfg, FitReport* report) {
    if (val.count == 0) throw Error(ErrorCode::insufficient_history, "mlp_direct needs validation windows");
    if (cfg.hidden == 0 || cfg.batch_size == 0) throw Error(ErrorCode::invalid_argument, "hidden and batch_size must be >= 1");
    const Layout& layout = train.layout;
    const std::size_t d = feature_dim(Family::mlp_direct, layout);
    const std::size_t o = layout.horizon;
    const std::size_t hidden = cfg.hidden;
    const std::size_t n = train.count;

    const auto row = [&](std::size_t i, std::span<double> x) { direct_features(train, i, x); };
    const Standardizer st = standardize_stats(n, d, row);
    std::vector<double> ymean(o, 0.0), yscale(o, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < o; ++k) ymean[k] += train.target(i)[k];
    for (auto& m : ymean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < o; ++k) yscale[k] += std::pow(train.target(i)[k] - ymean[k], 2);
    for (auto& s : yscale) {
        s = std::sqrt(s / static_cast<double>(n));
        if (!(s > 1e-12)) s = 1.0;
    }

    std::vector<double> z(n * d), yz(n * o);
    {
        std::vector<double> x(d);
        for (std::size_t i = 0; i < n; ++i) {
            row(i, x);
            for (std::size_t j = 0; j < d; ++j) z[i * d + j] = (x[j] - st.mean[j]) / st.scale[j];
            for (std::size_t k = 0; k < o; ++k) yz[i * o + k] = (train.target(i)[k] - ymean[k]) / yscale[k];
        }
    }

    const mlp::Offsets off = mlp::offsets(d, hidden, o);
    std::vector<double> w(off.total, 0.0);
    Rng rng(derive_seed(cfg.seed, "mlp-init"));
    const double a1 = std::sqrt(6.0 / static_cast<double>(d + hidden));
    const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + o));
    for (std::size_t i = 0; i < hidden * d; ++i) w[off.w1 + i] = (2.0 * rng.uniform() - 1.0) * a1;
    for (std::size_t i = 0; i < o * hidden; ++i) w[off.w2 + i] = (2.0 * rng.uniform() - 1.0) * a2;

    ModelShape shape{d, hidden, o};
    const Blocks b = blocks(shape);
    std::vector<double> params(b.weights + off.total);
    std::copy(st.mean.begin(), st.mean.end(), params.begin() + static_cast<std::ptrdiff_t>(b.mean));
    std::copy(st.scale.begin(), st.scale.end(), params.begin() + static_cast<std::ptrdiff_t>(b.scale));
    std::copy(ymean.begin(), ymean.end(), params.begin() + static_cast<std::ptrdiff_t>(b.ymean));
    std::copy(yscale.begin(), yscale.end(), params.begin() + static_cast<std::ptrdiff_t>(b.yscale));
    const auto handle_with = [&](const std::vector<double>& weights) {
        std::copy(weights.begin(), weights.end(), params.begin() + static_cast<std::ptrdiff_t>(b.weights));
        return ForecasterHandle(Family::mlp_direct, layout, shape, params, cfg.seed);
    };
    const auto val_mse = [&](const std::vector<double>& weights) {
        const auto pred = predict(handle_with(weights), val);
        return mean_squared(pred, val.targets);
    };

    std::vector<double> m(off.total, 0.0), v(off.total, 0.0), grad(off.total);
    std::vector<double> xb(cfg.batch_size * d), yb(cfg.batch_size * o);
    std::vector<std::size_t> order(n);
    Rng shuffle(derive_seed(cfg.seed, "mlp-shuffle"));
    std::vector<double> best = w;
    double best_mse = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0, since_best = 0, step = 0;
    FitReport local_report;
    FitReport& rep = report ? *report : local_report;
    rep = {};

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t startb = 0; startb < n; startb += cfg.batch_size) {
            const std::size_t rows = std::min(cfg.batch_size, n - startb);
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t i = order[startb + r];
                std::copy_n(z.begin() + static_cast<std::ptrdiff_t>(i * d), d, xb.begin() + static_cast<std::ptrdiff_t>(r * d));
                std::copy_n(yz.begin() + static_cast<std::ptrdiff_t>(i * o), o, yb.begin() + static_cast<std::ptrdiff_t>(r * o));
            }
            epoch_loss += mlp::loss_and_gradient(w, d, hidden, o, {xb.data(), rows * d}, {yb.data(), rows * o}, rows, grad);
            ++batches;
            ++step;
            const double c1 = 1.0 - std::pow(cfg.adam.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.adam.beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < off.total; ++p) {
                m[p] = cfg.adam.beta1 * m[p] + (1.0 - cfg.adam.beta1) * grad[p];
                v[p] = cfg.adam.beta2 * v[p] + (1.0 - cfg.adam.beta2) * grad[p] * grad[p];
                w[p] -= cfg.adam.lr * (m[p] / c1) / (std::sqrt(v[p] / c2) + cfg.adam.eps);
            }
        }
        rep.train_loss.push_back(epoch_loss / static_cast<double>(batches));
        const double mse = val_mse(w);
        rep.val_mse.push_back(mse);
        if (mse < best_mse) {
            best_mse = mse;
            best = w;
            best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    rep.best_epoch = best_epoch;
    return handle_with(best);
}

}  // namespace

}  // namespace csoeval
