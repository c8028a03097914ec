#pragma once

#include <string>
#include <vector>

namespace zonalseg {

// Minimal SVG assembler for the report diagrams.
class SvgWriter {
public:
  SvgWriter(double width, double height);

  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke = "#000", double stroke_width = 1.0);
  void polyline(const std::vector<std::pair<double, double>>& points,
                const std::string& stroke, double stroke_width,
                const std::string& fill = "none", bool close = false);
  void circle(double cx, double cy, double r, const std::string& fill);
  void text(double x, double y, const std::string& content, int font_size = 12,
            const std::string& anchor = "start");

  std::string str() const;
  void save(const std::string& path) const;

  static std::string round3(double v);

private:
  double width_, height_;
  std::string body_;
};

}  // namespace zonalseg
