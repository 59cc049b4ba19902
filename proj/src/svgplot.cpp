#include "retinavit/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "retinavit/errors.hpp"

namespace retinavit {

std::string quantity_name(int quantity) {
    switch (quantity) {
        case 0: return "attention_weights";
        case 1: return "attention_scores";
        default: return "residual_sums";
    }
}

std::string render_probe_svg(const ProbeReport& report, int quantity) {
    if (quantity < 0 || quantity > 2) throw DataError("quantity must be 0, 1 or 2");
    const int n = report.positions;
    const int depth = report.depth;

    const double left = 56.0, right = 16.0, top = 28.0;
    const double panel_w = 640.0, panel_h = 64.0, panel_gap = 18.0;
    const double width = left + panel_w + right;
    const double height = top + depth * (panel_h + panel_gap);

    std::ostringstream svg;
    svg.precision(5);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
        << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">"
        << quantity_name(quantity) << " (mean over " << report.count
        << " examples, input layer at top)</text>\n";

    for (int l = 0; l < depth; ++l) {
        const auto& row = report.layers[static_cast<size_t>(l)][static_cast<size_t>(quantity)];
        const double y0 = top + l * (panel_h + panel_gap);
        double lo = row[0], hi = row[0];
        for (double v : row) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo < 1e-12) hi = lo + 1e-12;

        auto px = [&](int i) { return left + panel_w * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.5); };
        auto py = [&](double v) { return y0 + panel_h - panel_h * (v - lo) / (hi - lo); };

        svg << "<rect x=\"" << left << "\" y=\"" << y0 << "\" width=\"" << panel_w
            << "\" height=\"" << panel_h << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
        svg << "<text x=\"4\" y=\"" << y0 + panel_h / 2.0
            << "\" font-family=\"sans-serif\" font-size=\"11\">layer " << l << "</text>\n";

        svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1\" points=\"";
        for (int i = 0; i < n; ++i) {
            svg << px(i) << "," << py(row[static_cast<size_t>(i)]);
            if (i + 1 < n) svg << " ";
        }
        svg << "\"/>\n";

        // Red markers on the x-axis at resolution boundaries.
        for (int b : report.boundaries) {
            const double x = left + panel_w * (n > 1 ? (b - 0.5) / (n - 1) : 0.5);
            svg << "<line x1=\"" << x << "\" y1=\"" << y0 + panel_h - 4 << "\" x2=\"" << x
                << "\" y2=\"" << y0 + panel_h + 4
                << "\" stroke=\"red\" stroke-width=\"1.5\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace retinavit
