#pragma once

#include <string>

namespace lowshot {

// Render the results CSV as an SVG: mean PSNR vs compression ratio, one
// polyline per (method, S, loss) group, vertical ±1 std error bars. Pure
// function of the CSV text, so identical input gives identical bytes.
std::string render_plot_svg(const std::string& csv_text);

// Parse, render, then write; nothing is written when parsing fails.
void emit_plot(const std::string& csv_path, const std::string& svg_path);

}  // namespace lowshot
