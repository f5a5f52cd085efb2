#include "dynlab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dynlab/error.hpp"

namespace dynlab {

PlotKind plot_kind_from_name(std::string_view name) {
  if (name == "hist" || name == "histogram") return PlotKind::Histogram;
  if (name == "scatter") return PlotKind::Scatter;
  if (name == "spectrum") return PlotKind::Spectrum;
  if (name == "recovery") return PlotKind::Recovery;
  throw Error(ErrorCode::InvalidArgument, "unknown plot kind: " + std::string(name));
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return !(lo <= hi); }
  void pad() {
    if (empty()) {
      lo = 0.0;
      hi = 1.0;
    } else if (hi - lo < 1e-12) {
      const double d = std::max(std::abs(lo) * 0.1, 0.5);
      lo -= d;
      hi += d;
    }
  }
};

class Canvas {
 public:
  Canvas(const PlotStyle& s, Range x, Range y) : s_(s), x_(x), y_(y) {
    left_ = 70;
    right_ = s.width - 150;
    top_ = 40;
    bottom_ = s.height - 55;
  }
  double px(double x) const { return left_ + (x - x_.lo) / (x_.hi - x_.lo) * (right_ - left_); }
  double py(double y) const { return bottom_ - (y - y_.lo) / (y_.hi - y_.lo) * (bottom_ - top_); }

  void header() {
    out_ += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(s_.width) + "\" height=\"" +
            std::to_string(s_.height) + "\" viewBox=\"0 0 " + std::to_string(s_.width) + " " +
            std::to_string(s_.height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out_ += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!s_.title.empty())
      out_ += "<text x=\"" + num(s_.width / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
              xml_escape(s_.title) + "</text>\n";
  }

  void axes() {
    out_ += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    out_ += "<line x1=\"" + num(left_) + "\" y1=\"" + num(bottom_) + "\" x2=\"" + num(right_) + "\" y2=\"" + num(bottom_) + "\"/>\n";
    out_ += "<line x1=\"" + num(left_) + "\" y1=\"" + num(top_) + "\" x2=\"" + num(left_) + "\" y2=\"" + num(bottom_) + "\"/>\n";
    out_ += "</g>\n<g class=\"ticks\">\n";
    for (int i = 0; i <= 5; ++i) {
      const double xv = x_.lo + (x_.hi - x_.lo) * i / 5.0;
      const double yv = y_.lo + (y_.hi - y_.lo) * i / 5.0;
      out_ += "<line x1=\"" + num(px(xv)) + "\" y1=\"" + num(bottom_) + "\" x2=\"" + num(px(xv)) + "\" y2=\"" +
              num(bottom_ + 4) + "\" stroke=\"black\"/>\n";
      out_ += "<text x=\"" + num(px(xv)) + "\" y=\"" + num(bottom_ + 16) + "\" text-anchor=\"middle\">" +
              xml_escape(tick_label(xv)) + "</text>\n";
      out_ += "<line x1=\"" + num(left_ - 4) + "\" y1=\"" + num(py(yv)) + "\" x2=\"" + num(left_) + "\" y2=\"" +
              num(py(yv)) + "\" stroke=\"black\"/>\n";
      out_ += "<text x=\"" + num(left_ - 6) + "\" y=\"" + num(py(yv) + 4) + "\" text-anchor=\"end\">" +
              xml_escape(tick_label(s_.log_y ? std::pow(10.0, yv) : yv)) + "</text>\n";
    }
    out_ += "</g>\n";
    out_ += "<text x=\"" + num((left_ + right_) / 2) + "\" y=\"" + num(s_.height - 15.0) + "\" text-anchor=\"middle\">" +
            xml_escape(s_.x_label) + "</text>\n";
    out_ += "<text x=\"16\" y=\"" + num((top_ + bottom_) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
            num((top_ + bottom_) / 2) + ")\">" + xml_escape(s_.y_label) + "</text>\n";
  }

  void legend(const std::vector<Series>& data) {
    out_ += "<g class=\"legend\">\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double y = top_ + 10 + 18.0 * static_cast<double>(i);
      out_ += "<rect x=\"" + num(right_ + 15) + "\" y=\"" + num(y - 8) + "\" width=\"12\" height=\"12\" fill=\"" +
              color(i) + "\"/>\n";
      out_ += "<text x=\"" + num(right_ + 32) + "\" y=\"" + num(y + 2) + "\">" + xml_escape(data[i].name) + "</text>\n";
    }
    out_ += "</g>\n";
  }

  void no_data() {
    out_ += "<text x=\"" + num((left_ + right_) / 2) + "\" y=\"" + num((top_ + bottom_) / 2) +
            "\" text-anchor=\"middle\" fill=\"#888\" font-size=\"16\">no data</text>\n";
  }

  static std::string color(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof kPalette[0])]; }

  std::string& out() { return out_; }
  std::string finish() {
    out_ += "</svg>\n";
    return out_;
  }

 private:
  const PlotStyle& s_;
  Range x_, y_;
  double left_, right_, top_, bottom_;
  std::string out_;
};

double transform_y(double y, bool log_y) { return log_y ? std::log10(std::max(y, 1e-300)) : y; }

}  // namespace

std::string emit_plot(PlotKind kind, const std::vector<Series>& data, const PlotStyle& style) {
  if (style.width < 300 || style.height < 200 || style.bins < 1)
    throw Error(ErrorCode::InvalidArgument, "plot dimensions too small");
  for (const Series& s : data) {
    if (kind == PlotKind::Histogram && !s.x.empty())
      throw Error(ErrorCode::SchemaMismatch, "histogram series take samples in y only");
    if (kind != PlotKind::Histogram && s.x.size() != s.y.size())
      throw Error(ErrorCode::SchemaMismatch, "series '" + s.name + "' has mismatched x/y lengths");
  }
  std::size_t total = 0;
  for (const Series& s : data) total += s.y.size();

  if (kind == PlotKind::Histogram) {
    Range xr;
    for (const Series& s : data)
      for (double v : s.y) xr.add(v);
    xr.pad();
    const int bins = style.bins;
    const double width = (xr.hi - xr.lo) / bins;
    std::vector<std::vector<int>> counts;
    Range yr;
    yr.add(0.0);
    for (const Series& s : data) {
      std::vector<int> c(static_cast<std::size_t>(bins), 0);
      for (double v : s.y) {
        if (!std::isfinite(v)) continue;
        const int b = std::clamp(static_cast<int>((v - xr.lo) / width), 0, bins - 1);
        ++c[static_cast<std::size_t>(b)];
      }
      for (int k : c) yr.add(k);
      counts.push_back(std::move(c));
    }
    if (yr.hi <= 0.0) yr.hi = 1.0;
    Canvas cv(style, xr, yr);
    cv.header();
    cv.axes();
    if (total == 0) cv.no_data();
    for (std::size_t si = 0; si < counts.size(); ++si) {
      cv.out() += "<g class=\"series\" fill=\"" + Canvas::color(si) + "\" fill-opacity=\"0.55\">\n";
      for (int b = 0; b < bins; ++b) {
        const int c = counts[si][static_cast<std::size_t>(b)];
        if (c == 0) continue;
        const double x0 = cv.px(xr.lo + b * width), x1 = cv.px(xr.lo + (b + 1) * width);
        const double y0 = cv.py(c), y1 = cv.py(0.0);
        cv.out() += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
                    num(y1 - y0) + "\"/>\n";
      }
      cv.out() += "</g>\n";
    }
    cv.legend(data);
    return cv.finish();
  }

  Range xr, yr;
  for (const Series& s : data)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xr.add(s.x[i]);
      yr.add(transform_y(s.y[i], style.log_y));
    }
  xr.pad();
  yr.pad();
  Canvas cv(style, xr, yr);
  cv.header();
  cv.axes();
  if (total == 0) cv.no_data();
  for (std::size_t si = 0; si < data.size(); ++si) {
    const Series& s = data[si];
    const std::string col = Canvas::color(si);
    if (kind == PlotKind::Scatter) {
      cv.out() += "<g class=\"series\" fill=\"" + col + "\" fill-opacity=\"0.6\">\n";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double y = transform_y(s.y[i], style.log_y);
        if (!std::isfinite(s.x[i]) || !std::isfinite(y)) continue;
        cv.out() += "<circle cx=\"" + num(cv.px(s.x[i])) + "\" cy=\"" + num(cv.py(y)) + "\" r=\"2\"/>\n";
      }
      cv.out() += "</g>\n";
    } else {
      std::string pts;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double y = transform_y(s.y[i], style.log_y);
        if (!std::isfinite(s.x[i]) || !std::isfinite(y)) continue;
        if (!pts.empty()) pts.push_back(' ');
        pts += num(cv.px(s.x[i])) + "," + num(cv.py(y));
      }
      cv.out() += "<polyline class=\"series\" fill=\"none\" stroke=\"" + col + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
      if (kind == PlotKind::Spectrum) {
        cv.out() += "<g fill=\"" + col + "\">\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          const double y = transform_y(s.y[i], style.log_y);
          if (std::isfinite(y)) cv.out() += "<circle cx=\"" + num(cv.px(s.x[i])) + "\" cy=\"" + num(cv.py(y)) + "\" r=\"3\"/>\n";
        }
        cv.out() += "</g>\n";
      }
    }
  }
  cv.legend(data);
  return cv.finish();
}

}  // namespace dynlab
