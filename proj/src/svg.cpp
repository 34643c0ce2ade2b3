#include "brc/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace brc {

namespace {

// Fixed 2-decimal coordinates keep the SVG bytes identical across runs.
std::string coord(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
    if (ec != std::errc{}) return "0";
    return std::string(buf, ptr);
}

std::string tick_label(double v) {
    // trim trailing zeros from a fixed representation
    std::string s = coord(v);
    if (s.find('.') != std::string::npos) {
        while (s.back() == '0') s.pop_back();
        if (s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}

double nice_step(double range, int target_ticks) {
    if (!(range > 0.0)) return 1.0;
    const double raw = range / target_ticks;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (const double m : {1.0, 2.0, 5.0}) {
        if (raw <= m * mag) return m * mag;
    }
    return 10.0 * mag;
}

struct Series {
    std::string label;
    std::string color;
    const std::vector<double>* y;
};

constexpr double kWidth = 560, kHeight = 360;
constexpr double kLeft = 66, kRight = 14, kTop = 30, kBottom = 46;

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<double>& x,
                       const std::vector<Series>& series, std::optional<double> marker_x,
                       bool log_y) {
    double x_min = x.front(), x_max = x.back();
    if (x_min == x_max) {
        x_min -= 1;
        x_max += 1;
    }
    double y_min = std::numeric_limits<double>::infinity();
    double y_max = -y_min;
    for (const Series& s : series) {
        for (double v : *s.y) {
            const double t = log_y ? std::log10(std::max(v, 1.0)) : v;
            y_min = std::min(y_min, t);
            y_max = std::max(y_max, t);
        }
    }
    if (!(y_min < y_max)) {
        y_min -= 1;
        y_max += 1;
    }
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    auto px = [&](double v) { return kLeft + (v - x_min) / (x_max - x_min) * plot_w; };
    auto py = [&](double v) {
        const double t = log_y ? std::log10(std::max(v, 1.0)) : v;
        return kTop + (y_max - t) / (y_max - y_min) * plot_h;
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + coord(kWidth) +
           "\" height=\"" + coord(kHeight) + "\" viewBox=\"0 0 " + coord(kWidth) + " " +
           coord(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + coord(kWidth / 2) + "\" y=\"18\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"13\">" + title + "</text>\n";

    // gridlines + ticks
    const double xs = nice_step(x_max - x_min, 6);
    for (double v = std::ceil(x_min / xs) * xs; v <= x_max + 1e-9; v += xs) {
        const double gx = px(v);
        svg += "<line x1=\"" + coord(gx) + "\" y1=\"" + coord(kTop) + "\" x2=\"" + coord(gx) +
               "\" y2=\"" + coord(kTop + plot_h) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + coord(gx) + "\" y=\"" + coord(kTop + plot_h + 16) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
               tick_label(v) + "</text>\n";
    }
    const double ys = nice_step(y_max - y_min, 5);
    for (double v = std::ceil(y_min / ys) * ys; v <= y_max + 1e-9; v += ys) {
        const double gy = kTop + (y_max - v) / (y_max - y_min) * plot_h;
        svg += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(gy) + "\" x2=\"" +
               coord(kLeft + plot_w) + "\" y2=\"" + coord(gy) +
               "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
        const std::string label = log_y ? ("1e" + tick_label(v)) : tick_label(v);
        svg += "<text x=\"" + coord(kLeft - 6) + "\" y=\"" + coord(gy + 3) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + label +
               "</text>\n";
    }
    // axes
    svg += "<rect x=\"" + coord(kLeft) + "\" y=\"" + coord(kTop) + "\" width=\"" +
           coord(plot_w) + "\" height=\"" + coord(plot_h) +
           "\" fill=\"none\" stroke=\"#404040\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + coord(kLeft + plot_w / 2) + "\" y=\"" + coord(kHeight - 10) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + x_label +
           "</text>\n";
    svg += "<text x=\"16\" y=\"" + coord(kTop + plot_h / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
           "transform=\"rotate(-90 16 " + coord(kTop + plot_h / 2) + ")\">" + y_label +
           "</text>\n";

    // zero line when visible (linear scale only)
    if (!log_y && y_min < 0.0 && y_max > 0.0) {
        const double gy = py(0.0);
        svg += "<line x1=\"" + coord(kLeft) + "\" y1=\"" + coord(gy) + "\" x2=\"" +
               coord(kLeft + plot_w) + "\" y2=\"" + coord(gy) +
               "\" stroke=\"#909090\" stroke-width=\"1\" stroke-dasharray=\"2,3\"/>\n";
    }
    // tipping marker
    if (marker_x && *marker_x >= x_min && *marker_x <= x_max) {
        const double gx = px(*marker_x);
        svg += "<line x1=\"" + coord(gx) + "\" y1=\"" + coord(kTop) + "\" x2=\"" + coord(gx) +
               "\" y2=\"" + coord(kTop + plot_h) +
               "\" stroke=\"#d62728\" stroke-width=\"1\" stroke-dasharray=\"4,3\"/>\n";
        svg += "<text x=\"" + coord(gx + 4) + "\" y=\"" + coord(kTop + 12) +
               "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#d62728\">tipping " +
               tick_label(*marker_x) + "</text>\n";
    }

    for (const Series& s : series) {
        std::string points;
        for (size_t i = 0; i < x.size(); ++i) {
            points += coord(px(x[i])) + "," + coord(py((*s.y)[i])) + " ";
        }
        svg += "<polyline fill=\"none\" stroke=\"" + s.color +
               "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    }
    // legend
    double ly = kTop + 8;
    for (const Series& s : series) {
        const double lx = kLeft + plot_w - 110;
        svg += "<line x1=\"" + coord(lx) + "\" y1=\"" + coord(ly) + "\" x2=\"" +
               coord(lx + 18) + "\" y2=\"" + coord(ly) + "\" stroke=\"" + s.color +
               "\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + coord(lx + 22) + "\" y=\"" + coord(ly + 3) +
               "\" font-family=\"sans-serif\" font-size=\"10\">" + s.label + "</text>\n";
        ly += 14;
    }
    svg += "</svg>\n";
    return svg;
}

const char* kind_color(VectorKind kind) {
    switch (kind) {
        case VectorKind::steered: return "#1f77b4";
        case VectorKind::random_control: return "#ff7f0e";
        case VectorKind::orthogonal_control: return "#2ca02c";
    }
    return "#000000";
}

void write_svg(const fs::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(contents.data(), static_cast<std::streamsize>(contents.size())))
        throw DataError("failed to write " + path.string());
}

}  // namespace

std::vector<std::string> emit_plots(const std::vector<BiasResponseCurve>& curves,
                                    const std::vector<std::string>& metrics,
                                    const std::string& out_dir,
                                    std::vector<std::string>* warnings) {
    std::vector<std::string> files;
    if (curves.empty()) {
        if (warnings) warnings->push_back("no curves to plot");
        return files;
    }

    // group curves by (inject, read); curves arrive sorted by pair then kind
    std::vector<std::pair<int, int>> groups;
    for (const auto& c : curves) {
        const std::pair<int, int> key{c.inject_layer, c.read_layer};
        if (groups.empty() || groups.back() != key) groups.push_back(key);
    }

    for (const auto& [inj, read] : groups) {
        std::vector<const BiasResponseCurve*> group;
        for (const auto& c : curves) {
            if (c.inject_layer == inj && c.read_layer == read) group.push_back(&c);
        }
        const BiasResponseCurve* steered = nullptr;
        for (const auto* c : group) {
            if (c->vector_kind == VectorKind::steered) steered = c;
        }
        const std::string stem = "inj" + std::to_string(inj) + "_read" + std::to_string(read);
        const std::string where =
            "inject L" + std::to_string(inj) + ", read L" + std::to_string(read);

        if (metric_selected(metrics, "logit_diff")) {
            std::vector<Series> series;
            for (const auto* c : group) {
                series.push_back({vector_kind_name(c->vector_kind),
                                  kind_color(c->vector_kind), &c->logit_diff});
            }
            std::optional<double> marker;
            if (steered) marker = steered->tipping_alpha;
            const std::string name = stem + "_logit_diff.svg";
            write_svg(fs::path(out_dir) / name,
                      line_chart("logit difference (" + where + ")", "alpha", "logit diff",
                                 group.front()->alphas, series, marker, false));
            files.push_back(name);
        }
        if (metric_selected(metrics, "kl")) {
            std::vector<Series> series;
            for (const auto* c : group) {
                series.push_back(
                    {vector_kind_name(c->vector_kind), kind_color(c->vector_kind), &c->kl});
            }
            const std::string name = stem + "_kl.svg";
            write_svg(fs::path(out_dir) / name,
                      line_chart("KL from baseline (" + where + ")", "alpha", "KL",
                                 group.front()->alphas, series, std::nullopt, false));
            files.push_back(name);
        }
        if (metric_selected(metrics, "rank") && steered) {
            std::vector<Series> series = {
                {"matching", "#1f77b4", &steered->rank_matching},
                {"not matching", "#d62728", &steered->rank_not_matching},
            };
            const std::string name = stem + "_ranks.svg";
            write_svg(fs::path(out_dir) / name,
                      line_chart("candidate token ranks (" + where + ", steered)", "alpha",
                                 "rank (log scale)", steered->alphas, series, std::nullopt,
                                 true));
            files.push_back(name);
        }
    }
    return files;
}

}  // namespace brc
