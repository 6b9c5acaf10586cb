#include "flamekit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "flamekit/error.hpp"
#include "flamekit/fsio.hpp"

namespace flamekit {

namespace {

constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 14;
constexpr int kMarginTop = 30;
constexpr int kMarginBottom = 42;
constexpr int kTicks = 5;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string fmt(double v, const char* spec = "%.2f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string tick_label(double v) { return fmt(v, "%.3g"); }

std::string escape_text(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void include(double v) {
        if (!std::isfinite(v)) throw DataError("non-finite value in SVG series");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (lo > hi) {  // no data at all
            lo = 0.0;
            hi = 1.0;
            return;
        }
        if (lo == hi) {
            const double bump = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
            lo -= bump;
            hi += bump;
            return;
        }
        const double margin = (hi - lo) * 0.05;
        lo -= margin;
        hi += margin;
    }
};

class PanelScale {
  public:
    PanelScale(Range xr, Range yr, double x0, double y0, double w, double h)
        : xr_(xr), yr_(yr), x0_(x0), y0_(y0), w_(w), h_(h) {}

    double sx(double x) const { return x0_ + (x - xr_.lo) / (xr_.hi - xr_.lo) * w_; }
    double sy(double y) const { return y0_ + h_ - (y - yr_.lo) / (yr_.hi - yr_.lo) * h_; }
    const Range& xr() const { return xr_; }
    const Range& yr() const { return yr_; }

  private:
    Range xr_, yr_;
    double x0_, y0_, w_, h_;
};

void check_series_shape(std::size_t nx, std::size_t ny, const std::string& label) {
    if (nx == 0 || nx != ny) {
        throw DataError("SVG series '" + label + "' needs equal, non-zero x/y lengths");
    }
}

std::string render_panel(const SvgPanel& panel, double ox, double oy, int width, int height) {
    const double plot_w = width - kMarginLeft - kMarginRight;
    const double plot_h = height - kMarginTop - kMarginBottom;
    const double px = ox + kMarginLeft;
    const double py = oy + kMarginTop;

    Range xr, yr;
    for (const auto& b : panel.bands) {
        check_series_shape(b.x.size(), b.lo.size(), b.label);
        check_series_shape(b.x.size(), b.hi.size(), b.label);
        for (double v : b.x) xr.include(v);
        for (double v : b.lo) yr.include(v);
        for (double v : b.hi) yr.include(v);
    }
    for (const auto& s : panel.series) {
        check_series_shape(s.x.size(), s.y.size(), s.label);
        for (double v : s.x) xr.include(v);
        for (double v : s.y) yr.include(v);
    }
    xr.pad();
    yr.pad();
    const PanelScale sc(xr, yr, px, py, plot_w, plot_h);

    std::string out;
    out += "<g>\n";
    out += "<rect x=\"" + fmt(ox) + "\" y=\"" + fmt(oy) + "\" width=\"" + fmt(width) +
           "\" height=\"" + fmt(height) + "\" fill=\"#ffffff\"/>\n";

    // Grid and tick labels.
    for (int i = 0; i < kTicks; ++i) {
        const double f = static_cast<double>(i) / (kTicks - 1);
        const double xv = xr.lo + f * (xr.hi - xr.lo);
        const double yv = yr.lo + f * (yr.hi - yr.lo);
        const double gx = sc.sx(xv);
        const double gy = sc.sy(yv);
        out += "<line x1=\"" + fmt(gx) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(gx) + "\" y2=\"" +
               fmt(py + plot_h) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
        out += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(gy) + "\" x2=\"" + fmt(px + plot_w) +
               "\" y2=\"" + fmt(gy) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fmt(gx) + "\" y=\"" + fmt(py + plot_h + 16) +
               "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#444444\">" + tick_label(xv) +
               "</text>\n";
        out += "<text x=\"" + fmt(px - 6) + "\" y=\"" + fmt(gy + 3) +
               "\" font-size=\"10\" text-anchor=\"end\" fill=\"#444444\">" + tick_label(yv) +
               "</text>\n";
    }

    // Bands under the curves.
    int color_i = 0;
    for (const auto& b : panel.bands) {
        const std::string color = b.color.empty() ? kPalette[color_i++ % kPaletteSize] : b.color;
        std::string pts;
        for (std::size_t i = 0; i < b.x.size(); ++i) {
            pts += fmt(sc.sx(b.x[i])) + ',' + fmt(sc.sy(b.hi[i])) + ' ';
        }
        for (std::size_t i = b.x.size(); i-- > 0;) {
            pts += fmt(sc.sx(b.x[i])) + ',' + fmt(sc.sy(b.lo[i])) + ' ';
        }
        pts.pop_back();
        out += "<polygon points=\"" + pts + "\" fill=\"" + color +
               "\" fill-opacity=\"0.22\" stroke=\"none\"/>\n";
    }

    // Series.
    for (const auto& s : panel.series) {
        const std::string color = s.color.empty() ? kPalette[color_i++ % kPaletteSize] : s.color;
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            pts += fmt(sc.sx(s.x[i])) + ',' + fmt(sc.sy(s.y[i])) + ' ';
        }
        pts.pop_back();
        out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"1.5\"" + (s.dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>\n";
    }

    // Frame, title, axis labels.
    out += "<rect x=\"" + fmt(px) + "\" y=\"" + fmt(py) + "\" width=\"" + fmt(plot_w) +
           "\" height=\"" + fmt(plot_h) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
    out += "<text x=\"" + fmt(px + plot_w / 2) + "\" y=\"" + fmt(oy + 18) +
           "\" font-size=\"12\" font-weight=\"bold\" text-anchor=\"middle\" fill=\"#111111\">" +
           escape_text(panel.title) + "</text>\n";
    if (!panel.x_label.empty()) {
        out += "<text x=\"" + fmt(px + plot_w / 2) + "\" y=\"" + fmt(py + plot_h + 32) +
               "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222222\">" +
               escape_text(panel.x_label) + "</text>\n";
    }
    if (!panel.y_label.empty()) {
        out += "<text x=\"" + fmt(ox + 14) + "\" y=\"" + fmt(py + plot_h / 2) +
               "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222222\" transform=\"rotate(-90 " +
               fmt(ox + 14) + ' ' + fmt(py + plot_h / 2) + ")\">" + escape_text(panel.y_label) +
               "</text>\n";
    }

    // Legend, top-right inside the plot area.
    int row = 0;
    color_i = 0;
    auto legend_entry = [&](const std::string& label, const std::string& color, bool dashed) {
        if (label.empty()) return;
        const double lx = px + plot_w - 120;
        const double ly = py + 12 + 14 * row++;
        out += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(ly - 3) + "\" x2=\"" + fmt(lx + 18) +
               "\" y2=\"" + fmt(ly - 3) + "\" stroke=\"" + color + "\" stroke-width=\"2\"" +
               (dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>\n";
        out += "<text x=\"" + fmt(lx + 23) + "\" y=\"" + fmt(ly) +
               "\" font-size=\"10\" fill=\"#222222\">" + escape_text(label) + "</text>\n";
    };
    for (const auto& b : panel.bands) {
        legend_entry(b.label, b.color.empty() ? kPalette[color_i++ % kPaletteSize] : b.color, false);
    }
    for (const auto& s : panel.series) {
        legend_entry(s.label, s.color.empty() ? kPalette[color_i++ % kPaletteSize] : s.color,
                     s.dashed);
    }

    out += "</g>\n";
    return out;
}

}  // namespace

std::string render_svg(const std::vector<SvgPanel>& panels, int columns, int panel_width,
                       int panel_height) {
    if (panels.empty()) throw DataError("SVG document needs at least one panel");
    if (columns < 1) columns = 1;
    const int n_cols = std::min<int>(columns, static_cast<int>(panels.size()));
    const int n_rows = (static_cast<int>(panels.size()) + n_cols - 1) / n_cols;
    const int width = n_cols * panel_width;
    const int height = n_rows * panel_height;

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                      "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
                      std::to_string(width) + ' ' + std::to_string(height) +
                      "\" font-family=\"sans-serif\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const int col = static_cast<int>(i) % n_cols;
        const int row = static_cast<int>(i) / n_cols;
        out += render_panel(panels[i], col * panel_width, row * panel_height, panel_width,
                            panel_height);
    }
    out += "</svg>\n";
    return out;
}

void write_svg(const std::string& path, const std::vector<SvgPanel>& panels, int columns,
               int panel_width, int panel_height) {
    write_file_atomic(path, render_svg(panels, columns, panel_width, panel_height));
}

}  // namespace flamekit
