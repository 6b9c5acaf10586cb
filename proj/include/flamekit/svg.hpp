#pragma once

#include <string>
#include <vector>

namespace flamekit {

/// One polyline. An empty color picks the next palette entry.
struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
    std::string color;
    bool dashed = false;
};

/// A shaded region between two curves (confidence band).
struct SvgBand {
    std::string label;
    std::vector<double> x, lo, hi;
    std::string color;
};

/// One chart with its own axes; panels tile left-to-right, top-to-bottom.
struct SvgPanel {
    std::string title;
    std::string x_label, y_label;
    std::vector<SvgBand> bands;    // drawn under the series
    std::vector<SvgSeries> series;
};

/// Self-contained SVG document. Output is byte-deterministic: every
/// coordinate is rendered with fixed precision.
std::string render_svg(const std::vector<SvgPanel>& panels, int columns = 2,
                       int panel_width = 440, int panel_height = 300);

void write_svg(const std::string& path, const std::vector<SvgPanel>& panels, int columns = 2,
               int panel_width = 440, int panel_height = 300);

}  // namespace flamekit
