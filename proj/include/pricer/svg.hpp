#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pricer {

/// Minimal SVG line chart: polylines, axes, tick labels, legend. No external
/// plotting dependency; output is deterministic for identical inputs.
class LinePlot {
public:
    LinePlot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add_series(std::string name, std::vector<double> xs, std::vector<double> ys) {
        if (xs.size() != ys.size()) throw std::invalid_argument("LinePlot: xs/ys size mismatch");
        series_.push_back({std::move(name), std::move(xs), std::move(ys)});
    }

    void mark_point(std::string name, double x, double y) { marks_.push_back({std::move(name), x, y}); }

    std::string render() const {
        double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
        double ymin = xmin, ymax = -xmin;
        auto grow = [&](double x, double y) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        };
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.xs.size(); ++i) grow(s.xs[i], s.ys[i]);
        for (const auto& m : marks_) grow(m.x, m.y);
        if (!std::isfinite(xmin)) {
            xmin = 0;
            xmax = 1;
            ymin = 0;
            ymax = 1;
        }
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;

        const double W = 760, H = 480, L = 78, R = 24, T = 44, B = 56;
        auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
        auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(2);
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
           << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
        os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
        os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << esc(title_)
           << "</text>\n";
        // axes
        os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
           << "\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
           << "\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 5; ++i) {
            const double fx = xmin + (xmax - xmin) * i / 5.0;
            const double fy = ymin + (ymax - ymin) * i / 5.0;
            os << "<text x=\"" << px(fx) << "\" y=\"" << H - B + 18
               << "\" text-anchor=\"middle\" font-size=\"11\">" << tick(fx) << "</text>\n";
            os << "<text x=\"" << L - 8 << "\" y=\"" << py(fy) + 4
               << "\" text-anchor=\"end\" font-size=\"11\">" << tick(fy) << "</text>\n";
        }
        os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 14
           << "\" text-anchor=\"middle\" font-size=\"12\">" << esc(x_label_) << "</text>\n";
        os << "<text x=\"20\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
           << "transform=\"rotate(-90 20 " << (T + H - B) / 2 << ")\">" << esc(y_label_) << "</text>\n";

        static const char* palette[] = {"#1f77b4", "#9ecae1", "#ff7f0e", "#2ca02c",
                                        "#d62728", "#9467bd", "#8c564b", "#7f7f7f"};
        for (std::size_t si = 0; si < series_.size(); ++si) {
            const auto& s = series_[si];
            os << "<polyline fill=\"none\" stroke=\"" << palette[si % 8] << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                if (i) os << ' ';
                os << px(s.xs[i]) << ',' << py(s.ys[i]);
            }
            os << "\"/>\n";
            os << "<text x=\"" << W - R - 6 << "\" y=\"" << T + 16 * (si + 1)
               << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << palette[si % 8] << "\">" << esc(s.name)
               << "</text>\n";
        }
        for (const auto& m : marks_) {
            os << "<circle cx=\"" << px(m.x) << "\" cy=\"" << py(m.y) << "\" r=\"4\" fill=\"#d62728\"/>\n";
            os << "<text x=\"" << px(m.x) + 6 << "\" y=\"" << py(m.y) - 6 << "\" font-size=\"11\">" << esc(m.name)
               << "</text>\n";
        }
        os << "</svg>\n";
        return os.str();
    }

    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("LinePlot: cannot write " + path);
        f << render();
    }

private:
    struct Series {
        std::string name;
        std::vector<double> xs, ys;
    };
    struct Mark {
        std::string name;
        double x, y;
    };

    static std::string esc(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '&')
                out += "&amp;";
            else if (c == '<')
                out += "&lt;";
            else if (c == '>')
                out += "&gt;";
            else
                out.push_back(c);
        }
        return out;
    }

    static std::string tick(double v) {
        std::ostringstream os;
        if (std::abs(v) >= 10000)
            os.precision(3);
        else
            os.precision(4);
        os << v;
        return os.str();
    }

    std::string title_, x_label_, y_label_;
    std::vector<Series> series_;
    std::vector<Mark> marks_;
};

}  // namespace pricer
