#include "zonalseg/svg.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace zonalseg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

}  // namespace

SvgWriter::SvgWriter(double width, double height) : width_(width), height_(height) {}

void SvgWriter::line(double x1, double y1, double x2, double y2,
                     const std::string& stroke, double stroke_width) {
  body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
           "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
           num(stroke_width) + "\"/>\n";
}

void SvgWriter::polyline(const std::vector<std::pair<double, double>>& points,
                         const std::string& stroke, double stroke_width,
                         const std::string& fill, bool close) {
  body_ += close ? "<polygon points=\"" : "<polyline points=\"";
  for (const auto& [x, y] : points) body_ += num(x) + "," + num(y) + " ";
  body_ += "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(stroke_width) +
           "\" fill=\"" + fill + "\" fill-opacity=\"0.25\"/>\n";
}

void SvgWriter::circle(double cx, double cy, double r, const std::string& fill) {
  body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) +
           "\" fill=\"" + fill + "\"/>\n";
}

void SvgWriter::text(double x, double y, const std::string& content, int font_size,
                     const std::string& anchor) {
  body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" +
           std::to_string(font_size) + "\" font-family=\"sans-serif\" text-anchor=\"" +
           anchor + "\">" + escape(content) + "</text>\n";
}

std::string SvgWriter::str() const {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         num(width_) + "\" height=\"" + num(height_) + "\" viewBox=\"0 0 " + num(width_) +
         " " + num(height_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
         body_ + "</svg>\n";
}

void SvgWriter::save(const std::string& path) const {
  std::ofstream out(path);
  out << str();
  if (!out) throw std::runtime_error("SvgWriter: cannot write " + path);
}

std::string SvgWriter::round3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace zonalseg
