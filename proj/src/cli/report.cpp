#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <map>
#include <sstream>

#include "csoeval/error.hpp"
#include "csoeval/io.hpp"

namespace csoeval::cli {

namespace {

constexpr const char* kPalette[] = {"#1b6ca8", "#d1495b", "#edae49", "#00798c", "#66a182", "#8d6a9f", "#30343f"};

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

struct Box {
    double lo, q1, med, q3, hi;
};

Box box_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return {v.front(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75), v.back()};
}

/// Ticks covering [lo, hi] at a 1/2/5 spacing.
std::vector<double> ticks(double lo, double hi) {
    if (!(hi > lo)) hi = lo + 1.0;
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(t);
    return out;
}

/// Minimal SVG canvas with one plot area per panel.
class Svg {
public:
    Svg(int w, int h, const std::string& title, const ReportMeta& meta) : w_(w), h_(h) {
        os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
            << w << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
        os_ << "<!-- config_hash=" << meta.config_hash << " seed_base=" << meta.seed_base << " -->\n";
        os_ << "<metadata>{\"config_hash\":\"" << meta.config_hash << "\",\"seed_base\":" << meta.seed_base
            << "}</metadata>\n";
        os_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        text(w / 2.0, 18, title, "middle", 14);
    }

    void text(double x, double y, const std::string& s, const char* anchor = "start", int size = 11,
              const char* extra = "") {
        os_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor << "\" font-size=\""
            << size << "\"" << extra << ">" << esc(s) << "</text>\n";
    }
    void line(double x1, double y1, double x2, double y2, const char* stroke = "#333", double width = 1.0) {
        os_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
            << "\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\"/>\n";
    }
    void rect(double x, double y, double w, double h, const char* fill, double opacity = 1.0) {
        os_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
            << "\" fill=\"" << fill << "\" fill-opacity=\"" << opacity << "\" stroke=\"#333\"/>\n";
    }
    void circle(double x, double y, double r, const char* fill) {
        os_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << r << "\" fill=\"" << fill
            << "\" stroke=\"#333\"/>\n";
    }

    void save(const std::filesystem::path& path) {
        os_ << "</svg>\n";
        std::ofstream out(path);
        if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
        out << os_.str();
    }

    int width() const { return w_; }
    int height() const { return h_; }

private:
    int w_, h_;
    std::ostringstream os_;
};

/// Linear mapping from data to pixels for one panel.
struct Axis {
    double x0, y0, w, h;  // plot area in pixels
    double lo, hi;        // y data range

    double y(double v) const { return y0 + h - (v - lo) / (hi - lo) * h; }

    void draw_y(Svg& svg, const std::string& label) {
        const auto t = ticks(lo, hi);
        lo = std::min(lo, t.front());
        hi = std::max(hi, t.back());
        svg.line(x0, y0, x0, y0 + h);
        svg.line(x0, y0 + h, x0 + w, y0 + h);
        for (double v : t) {
            svg.line(x0 - 4, y(v), x0, y(v));
            svg.line(x0, y(v), x0 + w, y(v), "#ddd", 0.5);
            svg.text(x0 - 6, y(v) + 4, num(v), "end");
        }
        std::ostringstream rot;
        rot << " transform=\"rotate(-90 " << num(x0 - 48) << ' ' << num(y0 + h / 2) << ")\"";
        svg.text(x0 - 48, y0 + h / 2, label, "middle", 11, rot.str().c_str());
    }
};

std::pair<double, double> padded_range(const std::vector<double>& v) {
    double lo = *std::min_element(v.begin(), v.end());
    double hi = *std::max_element(v.begin(), v.end());
    if (lo > 0 && lo < 0.5 * hi) lo = 0;
    const double pad = hi > lo ? 0.05 * (hi - lo) : std::max(1e-3, std::abs(hi) * 0.1);
    return {lo - (lo == 0 ? 0 : pad), hi + pad};
}

void draw_box(Svg& svg, const Axis& ax, double cx, double half, const Box& b, const char* fill) {
    svg.line(cx, ax.y(b.lo), cx, ax.y(b.q1));
    svg.line(cx, ax.y(b.q3), cx, ax.y(b.hi));
    svg.line(cx - half / 2, ax.y(b.lo), cx + half / 2, ax.y(b.lo));
    svg.line(cx - half / 2, ax.y(b.hi), cx + half / 2, ax.y(b.hi));
    svg.rect(cx - half, ax.y(b.q3), 2 * half, std::max(1.0, ax.y(b.q1) - ax.y(b.q3)), fill, 0.7);
    svg.line(cx - half, ax.y(b.med), cx + half, ax.y(b.med), "#000", 2);
}

std::ofstream open_csv(const std::filesystem::path& path, const ReportMeta& meta) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << "# config_hash=" << meta.config_hash << " seed_base=" << meta.seed_base << '\n';
    return out;
}

std::vector<std::string> model_order(std::span<const TradeoffIndices> indices) {
    std::vector<std::string> out;
    for (const auto& row : indices) out.push_back(row.model_type);
    return out;
}

void mse_spread(const std::filesystem::path& dir, std::span<const EvalRecord> records,
                const std::vector<std::string>& models, const ReportMeta& meta, std::vector<std::filesystem::path>& files) {
    std::map<std::string, std::vector<double>> clean;
    auto csv = open_csv(dir / "mse_spread.csv", meta);
    csv << "model_type,mode,trial,seed,mse\n";
    for (const auto& r : records)
        if (r.clean() && r.ok) {
            clean[r.model_type].push_back(r.mse);
            csv << r.model_type << ',' << mode_name(r.mode) << ',' << r.trial << ',' << r.seed << ','
                << format_number(r.mse) << '\n';
        }
    std::vector<double> all;
    for (const auto& [m, v] : clean) all.insert(all.end(), v.begin(), v.end());
    if (all.empty()) throw Error(ErrorCode::empty_evaluation_set, "no clean records to plot");

    const int w = std::max(480, 130 * static_cast<int>(models.size()) + 120);
    Svg svg(w, 400, "MSE across training seeds", meta);
    auto [lo, hi] = padded_range(all);
    Axis ax{80, 40, w - 110.0, 290, lo, hi};
    ax.draw_y(svg, "MSE (clean test set)");
    const double slot = ax.w / static_cast<double>(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        const double cx = ax.x0 + slot * (i + 0.5);
        if (clean.contains(models[i])) draw_box(svg, ax, cx, std::min(24.0, slot / 4), box_of(clean[models[i]]), kPalette[i % 7]);
        svg.text(cx, ax.y0 + ax.h + 16, models[i], "middle");
    }
    svg.save(dir / "mse_spread.svg");
    files.push_back(dir / "mse_spread.svg");
    files.push_back(dir / "mse_spread.csv");
}

void mse_peak(const std::filesystem::path& dir, std::span<const EvalRecord> records,
              const std::vector<std::string>& models, const ReportMeta& meta, std::vector<std::filesystem::path>& files) {
    std::map<std::string, std::vector<double>> full, peak;
    auto csv = open_csv(dir / "mse_peak.csv", meta);
    csv << "model_type,mode,trial,seed,mse,mse_peak\n";
    for (const auto& r : records)
        if (r.clean() && r.ok && std::isfinite(r.mse_peak)) {
            full[r.model_type].push_back(r.mse);
            peak[r.model_type].push_back(r.mse_peak);
            csv << r.model_type << ',' << mode_name(r.mode) << ',' << r.trial << ',' << r.seed << ','
                << format_number(r.mse) << ',' << format_number(r.mse_peak) << '\n';
        }
    std::vector<double> all{0.0};
    for (const auto* src : {&full, &peak})
        for (const auto& [m, v] : *src) all.push_back(box_of(v).q3);

    const int w = std::max(480, 130 * static_cast<int>(models.size()) + 120);
    Svg svg(w, 420, "MSE on all test cells vs. peak events", meta);
    auto [lo, hi] = padded_range(all);
    Axis ax{80, 40, w - 110.0, 290, 0.0, hi};
    ax.draw_y(svg, "median MSE (bars: IQR)");
    const double slot = ax.w / static_cast<double>(models.size());
    const double bw = std::min(28.0, slot / 3);
    for (std::size_t i = 0; i < models.size(); ++i) {
        const double cx = ax.x0 + slot * (i + 0.5);
        int k = 0;
        for (const auto* src : {&full, &peak}) {
            const auto it = src->find(models[i]);
            if (it != src->end()) {
                const Box b = box_of(it->second);
                const double x = cx + (k == 0 ? -bw : 0.0);
                svg.rect(x, ax.y(b.med), bw, ax.y(0.0) - ax.y(b.med), k == 0 ? "#9fb7c9" : "#d1495b", 0.85);
                svg.line(x + bw / 2, ax.y(b.q1), x + bw / 2, ax.y(b.q3), "#000", 1.5);
            }
            ++k;
        }
        svg.text(cx, ax.y0 + ax.h + 16, models[i], "middle");
    }
    svg.rect(ax.x0 + 10, 370, 12, 12, "#9fb7c9");
    svg.text(ax.x0 + 28, 380, "all test cells");
    svg.rect(ax.x0 + 130, 370, 12, 12, "#d1495b");
    svg.text(ax.x0 + 148, 380, "peak-event cells");
    svg.save(dir / "mse_peak.svg");
    files.push_back(dir / "mse_peak.svg");
    files.push_back(dir / "mse_peak.csv");
}

void mse_increase(const std::filesystem::path& dir, std::span<const EvalRecord> records,
                  const std::vector<std::string>& models, const ReportMeta& meta,
                  std::vector<std::filesystem::path>& files) {
    std::map<std::pair<std::string, std::size_t>, double> clean;
    for (const auto& r : records)
        if (r.clean() && r.ok) clean[{r.model_type, r.trial}] = r.mse;
    std::vector<std::string> kinds;
    std::map<std::pair<std::string, std::string>, std::vector<double>> inc;
    auto csv = open_csv(dir / "mse_increase.csv", meta);
    csv << "model_type,mode,trial,feature,error_kind,error_rate,increase\n";
    for (const auto& r : records) {
        if (r.clean() || !r.ok) continue;
        const auto it = clean.find({r.model_type, r.trial});
        if (it == clean.end()) continue;
        const double d = r.mse - it->second;
        if (std::find(kinds.begin(), kinds.end(), r.error_kind) == kinds.end()) kinds.push_back(r.error_kind);
        inc[{r.model_type, r.error_kind}].push_back(d);
        csv << r.model_type << ',' << mode_name(r.mode) << ',' << r.trial << ',' << r.feature << ',' << r.error_kind
            << ',' << format_number(r.error_rate) << ',' << format_number(d) << '\n';
    }
    const int w = std::max(480, std::max(130, 40 * static_cast<int>(kinds.size())) * static_cast<int>(models.size()) + 120);
    Svg svg(w, 420, "MSE increase under perturbation", meta);
    if (inc.empty()) {
        svg.text(w / 2.0, 200, "no perturbed records", "middle");
    } else {
        std::vector<double> all;
        for (const auto& [k, v] : inc) {
            const Box b = box_of(v);
            all.push_back(b.lo);
            all.push_back(b.hi);
        }
        auto [lo, hi] = padded_range(all);
        Axis ax{80, 40, w - 110.0, 290, std::min(lo, 0.0), hi};
        ax.draw_y(svg, "MSE perturbed - MSE clean");
        svg.line(ax.x0, ax.y(0.0), ax.x0 + ax.w, ax.y(0.0), "#888", 1);
        const double slot = ax.w / static_cast<double>(models.size());
        const double sub = slot / static_cast<double>(kinds.size() + 1);
        for (std::size_t i = 0; i < models.size(); ++i) {
            for (std::size_t k = 0; k < kinds.size(); ++k) {
                const auto it = inc.find({models[i], kinds[k]});
                if (it == inc.end()) continue;
                draw_box(svg, ax, ax.x0 + slot * i + sub * (k + 1), std::min(12.0, sub / 3), box_of(it->second),
                         kPalette[k % 7]);
            }
            svg.text(ax.x0 + slot * (i + 0.5), ax.y0 + ax.h + 16, models[i], "middle");
        }
        for (std::size_t k = 0; k < kinds.size(); ++k) {
            svg.rect(ax.x0 + 10 + 110.0 * k, 370, 12, 12, kPalette[k % 7], 0.7);
            svg.text(ax.x0 + 28 + 110.0 * k, 380, kinds[k]);
        }
    }
    svg.save(dir / "mse_increase.svg");
    files.push_back(dir / "mse_increase.svg");
    files.push_back(dir / "mse_increase.csv");
}

void tradeoff(const std::filesystem::path& dir, std::span<const TradeoffIndices> indices, const ReportMeta& meta,
              std::vector<std::filesystem::path>& files) {
    auto csv = open_csv(dir / "tradeoff.csv", meta);
    csv << "model_type,mode,trials,median_mse,iqr_mse,median_mse_peak,ri,cci\n";
    for (const auto& row : indices)
        csv << row.model_type << ',' << mode_name(row.mode) << ',' << row.trials << ',' << format_number(row.median_mse)
            << ',' << format_number(row.iqr_mse) << ',' << format_number(row.median_mse_peak) << ','
            << (row.ri ? format_number(*row.ri) : "") << ',' << (row.cci ? format_number(*row.cci) : "") << '\n';

    const int pw = 300;
    Svg svg(3 * pw + 120, 400, "Trade-offs: accuracy vs. consistency, robustness, complexity", meta);
    std::vector<double> xs;
    for (const auto& row : indices) xs.push_back(row.median_mse);
    auto [xlo, xhi] = padded_range(xs);
    const auto xt = ticks(xlo, xhi);
    xlo = std::min(xlo, xt.front());
    xhi = std::max(xhi, xt.back());

    struct Panel {
        const char* label;
        std::function<std::optional<double>(const TradeoffIndices&)> get;
    };
    const Panel panels[] = {
        {"IQR of clean MSE", [](const TradeoffIndices& r) { return std::optional<double>(r.iqr_mse); }},
        {"RI", [](const TradeoffIndices& r) { return r.ri; }},
        {"CCI", [](const TradeoffIndices& r) { return r.cci; }},
    };
    for (std::size_t p = 0; p < 3; ++p) {
        std::vector<double> ys;
        for (const auto& row : indices)
            if (auto v = panels[p].get(row)) ys.push_back(*v);
        const double x0 = 70.0 + static_cast<double>(p) * (pw + 10);
        if (ys.empty()) {
            svg.text(x0 + pw / 2.0, 180, std::string(panels[p].label) + ": not measured", "middle");
            continue;
        }
        auto [ylo, yhi] = padded_range(ys);
        Axis ax{x0, 40, pw - 60.0, 290, std::min(ylo, 0.0), yhi};
        ax.draw_y(svg, panels[p].label);
        const auto xpix = [&](double v) { return ax.x0 + (v - xlo) / (xhi - xlo) * ax.w; };
        for (double t : xt) {
            svg.line(xpix(t), ax.y0 + ax.h, xpix(t), ax.y0 + ax.h + 4);
            svg.text(xpix(t), ax.y0 + ax.h + 16, num(t), "middle");
        }
        svg.text(ax.x0 + ax.w / 2, ax.y0 + ax.h + 32, "median MSE", "middle");
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const auto v = panels[p].get(indices[i]);
            if (!v) continue;
            svg.circle(xpix(indices[i].median_mse), ax.y(*v), 5, kPalette[i % 7]);
        }
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
        svg.circle(80 + 150.0 * static_cast<double>(i % 6), 376 + 14.0 * static_cast<double>(i / 6), 5, kPalette[i % 7]);
        svg.text(90 + 150.0 * static_cast<double>(i % 6), 380 + 14.0 * static_cast<double>(i / 6), indices[i].model_type);
    }
    svg.save(dir / "tradeoff.svg");
    files.push_back(dir / "tradeoff.svg");
    files.push_back(dir / "tradeoff.csv");
}

}  // namespace

std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, std::span<const EvalRecord> records,
                                                std::span<const TradeoffIndices> indices, const ReportMeta& meta) {
    std::filesystem::create_directories(dir);
    const auto models = model_order(indices);
    std::vector<std::filesystem::path> files;
    mse_spread(dir, records, models, meta, files);
    mse_peak(dir, records, models, meta, files);
    mse_increase(dir, records, models, meta, files);
    tradeoff(dir, indices, meta, files);
    return files;
}

}  // namespace csoeval::cli
