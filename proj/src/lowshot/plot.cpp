#include "lowshot/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "lowshot/common.hpp"
#include "lowshot/csv.hpp"

namespace lowshot {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

struct RowData {
    double ratio;
    int s;
    std::string loss;
    std::string method;
    double psnr;
};

double parse_num(const std::string& s, std::size_t line_no, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw IoError("csv parse error at line " + std::to_string(line_no) + ": bad " + what +
                      " value '" + s + "'");
    }
}

std::vector<RowData> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<RowData> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != kResultCsvHeader)
                throw IoError("csv parse error at line 1: expected header '" +
                              std::string(kResultCsvHeader) + "'");
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 9)
            throw IoError("csv parse error at line " + std::to_string(line_no) + ": expected 9 fields, got " +
                          std::to_string(f.size()));
        RowData r;
        r.ratio = parse_num(f[1], line_no, "ratio");
        r.s = static_cast<int>(parse_num(f[2], line_no, "S"));
        r.loss = f[3];
        r.method = f[4];
        r.psnr = parse_num(f[7], line_no, "psnr");
        parse_num(f[8], line_no, "wall_ms");
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ConfigError("csv has no data rows, nothing to plot");
    return rows;
}

struct Point {
    double ratio;
    double mean;
    double std;
};

struct Curve {
    std::string label;
    std::vector<Point> points;
};

std::vector<Curve> build_curves(const std::vector<RowData>& rows) {
    // (method, S, loss) -> ratio -> psnr values
    std::map<std::tuple<std::string, int, std::string>, std::map<double, std::vector<double>>> groups;
    for (const auto& r : rows) groups[{r.method, r.s, r.loss}][r.ratio].push_back(r.psnr);

    std::vector<Curve> curves;
    for (const auto& [key, by_ratio] : groups) {
        Curve c;
        const auto& [method, s, loss] = key;
        c.label = method;
        if (s > 0) c.label += " S=" + std::to_string(s);
        if (loss != "none") c.label += " " + loss;
        for (const auto& [ratio, vals] : by_ratio) {
            double mean = 0;
            for (double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            double var = 0;
            if (vals.size() > 1) {
                for (double v : vals) var += (v - mean) * (v - mean);
                var /= static_cast<double>(vals.size() - 1);
            }
            c.points.push_back({ratio, mean, std::sqrt(var)});
        }
        curves.push_back(std::move(c));
    }
    return curves;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string render_plot_svg(const std::string& csv_text) {
    const auto curves = build_curves(parse_csv(csv_text));

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& c : curves) {
        for (const auto& p : c.points) {
            xmin = std::min(xmin, p.ratio);
            xmax = std::max(xmax, p.ratio);
            ymin = std::min(ymin, p.mean - p.std);
            ymax = std::max(ymax, p.mean + p.std);
        }
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.05;
        xmax += 0.05;
    }
    const double ypad = std::max(0.5, (ymax - ymin) * 0.08);
    ymin -= ypad;
    ymax += ypad;

    const double width = 720, height = 480;
    const double l = 64, r = 20, t = 24, b = 48;
    auto sx = [&](double x) { return l + (x - xmin) / (xmax - xmin) * (width - l - r); };
    auto sy = [&](double y) { return height - b - (y - ymin) / (ymax - ymin) * (height - t - b); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" +
           fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // axes
    svg += "<line x1=\"" + fmt(l) + "\" y1=\"" + fmt(height - b) + "\" x2=\"" + fmt(width - r) +
           "\" y2=\"" + fmt(height - b) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(l) + "\" y1=\"" + fmt(t) + "\" x2=\"" + fmt(l) + "\" y2=\"" +
           fmt(height - b) + "\" stroke=\"black\"/>\n";

    const int xticks = 5, yticks = 6;
    for (int i = 0; i <= xticks; ++i) {
        const double v = xmin + (xmax - xmin) * i / xticks;
        const double x = sx(v);
        svg += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(height - b) + "\" x2=\"" + fmt(x) +
               "\" y2=\"" + fmt(height - b + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(height - b + 20) +
               "\" font-size=\"12\" text-anchor=\"middle\">" + fmt(v) + "</text>\n";
    }
    for (int i = 0; i <= yticks; ++i) {
        const double v = ymin + (ymax - ymin) * i / yticks;
        const double y = sy(v);
        svg += "<line x1=\"" + fmt(l - 5) + "\" y1=\"" + fmt(y) + "\" x2=\"" + fmt(l) + "\" y2=\"" +
               fmt(y) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt(l - 9) + "\" y=\"" + fmt(y + 4) +
               "\" font-size=\"12\" text-anchor=\"end\">" + fmt(v) + "</text>\n";
    }
    svg += "<text x=\"" + fmt((l + width - r) / 2) + "\" y=\"" + fmt(height - 10) +
           "\" font-size=\"13\" text-anchor=\"middle\">compression ratio m/n</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt((t + height - b) / 2) +
           "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           fmt((t + height - b) / 2) + ")\">mean PSNR (dB)</text>\n";

    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& c = curves[ci];
        const char* color = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
        for (const auto& p : c.points) {
            const double x = sx(p.ratio);
            svg += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(sy(p.mean - p.std)) + "\" x2=\"" +
                   fmt(x) + "\" y2=\"" + fmt(sy(p.mean + p.std)) + "\" stroke=\"" + color +
                   "\" stroke-width=\"1\"/>\n";
            svg += "<line x1=\"" + fmt(x - 3) + "\" y1=\"" + fmt(sy(p.mean - p.std)) + "\" x2=\"" +
                   fmt(x + 3) + "\" y2=\"" + fmt(sy(p.mean - p.std)) + "\" stroke=\"" + color +
                   "\" stroke-width=\"1\"/>\n";
            svg += "<line x1=\"" + fmt(x - 3) + "\" y1=\"" + fmt(sy(p.mean + p.std)) + "\" x2=\"" +
                   fmt(x + 3) + "\" y2=\"" + fmt(sy(p.mean + p.std)) + "\" stroke=\"" + color +
                   "\" stroke-width=\"1\"/>\n";
        }
        std::string pts;
        for (const auto& p : c.points) {
            if (!pts.empty()) pts += " ";
            pts += fmt(sx(p.ratio)) + "," + fmt(sy(p.mean));
        }
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
        const double ly = t + 16 + 16 * static_cast<double>(ci);
        svg += "<rect x=\"" + fmt(width - r - 170) + "\" y=\"" + fmt(ly - 9) +
               "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
        svg += "<text x=\"" + fmt(width - r - 155) + "\" y=\"" + fmt(ly) + "\" font-size=\"12\">" +
               c.label + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

void emit_plot(const std::string& csv_path, const std::string& svg_path) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + csv_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string svg = render_plot_svg(text);
    std::ofstream out(svg_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + svg_path + " for writing");
    out.write(svg.data(), static_cast<std::streamsize>(svg.size()));
    if (!out) throw IoError("short write to " + svg_path);
}

}  // namespace lowshot
