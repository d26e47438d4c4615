#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdassign/anchors.hpp"
#include "crowdassign/assign.hpp"
#include "crowdassign/metrics.hpp"
#include "crowdassign/scene.hpp"

namespace crowdassign {

/// Fixed 6-significant-digit float text, the one float format every report
/// uses so output bytes never depend on ambient locale or build flags.
inline std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

/// JSON number rounded to the same 6 significant digits as fmt6.
inline nlohmann::json jnum(double x) { return std::strtod(fmt6(x).c_str(), nullptr); }

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace detail {

inline const char* stage_color(int stage) {
  static const char* palette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
                                  "#ff7f00"};
  if (stage < 0) return "#999999";
  return palette[stage % 5];
}

}  // namespace detail

/// Scene overlay: full boxes outlined, visible rectangles shaded, positive
/// anchor centers dotted in their pyramid stage's color.
inline std::string scene_overlay_svg(const Scene& scene, const AnchorSet& anchors,
                                     const Assignment& assignment,
                                     const std::string& caption) {
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 "
      << fmt6(scene.image_w) << " " << fmt6(scene.image_h) << "\">\n";
  svg << "<rect width=\"" << fmt6(scene.image_w) << "\" height=\""
      << fmt6(scene.image_h) << "\" fill=\"#ffffff\"/>\n";
  for (std::size_t i = 0; i < scene.gts.size(); ++i) {
    const Box& b = scene.gts.boxes[i];
    svg << "<rect x=\"" << fmt6(b.x1) << "\" y=\"" << fmt6(b.y1) << "\" width=\""
        << fmt6(b.width()) << "\" height=\"" << fmt6(b.height())
        << "\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1.5\"/>\n";
    const Box& v = scene.visible[i];
    if (v.area() > 0.0) {
      svg << "<rect x=\"" << fmt6(v.x1) << "\" y=\"" << fmt6(v.y1) << "\" width=\""
          << fmt6(v.width()) << "\" height=\"" << fmt6(v.height())
          << "\" fill=\"#4daf4a\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }
  }
  for (std::size_t j = 0; j < assignment.labels.size(); ++j) {
    if (assignment.labels[j] < 0) continue;
    const Point& c = anchors.centers[j];
    svg << "<circle cx=\"" << fmt6(c.x) << "\" cy=\"" << fmt6(c.y)
        << "\" r=\"2.5\" fill=\"" << detail::stage_color(anchors.levels[j])
        << "\"/>\n";
  }
  svg << "<text x=\"8\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
      << caption << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

/// Area-vs-modal-stage scatter: one mark per GT, unassigned GTs hollow.
inline std::string allocation_scatter_svg(
    const std::vector<std::vector<AllocationEntry>>& groups,
    const std::vector<std::string>& labels, int num_stages) {
  if (groups.size() != labels.size())
    throw std::invalid_argument("allocation_scatter_svg: group/label mismatch");
  const double width = 640.0;
  const double height = 360.0;
  const double margin = 48.0;
  double max_side = 1.0;
  for (const auto& group : groups)
    for (const AllocationEntry& e : group)
      max_side = std::max(max_side, std::sqrt(e.area));

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << fmt6(width)
      << " " << fmt6(height) << "\">\n";
  svg << "<rect width=\"" << fmt6(width) << "\" height=\"" << fmt6(height)
      << "\" fill=\"#ffffff\"/>\n";
  // Axes: x = sqrt(GT area), y = modal stage (finest at the bottom).
  svg << "<line x1=\"" << fmt6(margin) << "\" y1=\"" << fmt6(height - margin)
      << "\" x2=\"" << fmt6(width - margin) << "\" y2=\"" << fmt6(height - margin)
      << "\" stroke=\"#222222\"/>\n";
  svg << "<line x1=\"" << fmt6(margin) << "\" y1=\"" << fmt6(margin) << "\" x2=\""
      << fmt6(margin) << "\" y2=\"" << fmt6(height - margin)
      << "\" stroke=\"#222222\"/>\n";
  for (int s = 0; s < num_stages; ++s) {
    const double y = height - margin -
                     (height - 2.0 * margin) * (static_cast<double>(s) + 0.5) /
                         static_cast<double>(num_stages);
    svg << "<text x=\"8\" y=\"" << fmt6(y + 4.0)
        << "\" font-family=\"sans-serif\" font-size=\"12\">stage " << s
        << "</text>\n";
  }
  const char* group_shapes[] = {"circle", "rect"};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const char* shape = group_shapes[g % 2];
    for (const AllocationEntry& e : groups[g]) {
      const double x =
          margin + (width - 2.0 * margin) * std::sqrt(e.area) / max_side;
      const double stage_f = e.modal_stage < 0 ? -0.5 : static_cast<double>(e.modal_stage);
      const double y = height - margin -
                       (height - 2.0 * margin) * (stage_f + 0.5) /
                           static_cast<double>(num_stages);
      const char* fill = e.modal_stage < 0 ? "none" : detail::stage_color(e.modal_stage);
      if (shape[0] == 'c') {
        svg << "<circle cx=\"" << fmt6(x) << "\" cy=\"" << fmt6(y)
            << "\" r=\"4\" fill=\"" << fill << "\" stroke=\"#222222\"/>\n";
      } else {
        svg << "<rect x=\"" << fmt6(x - 3.5) << "\" y=\"" << fmt6(y - 3.5)
            << "\" width=\"7\" height=\"7\" fill=\"" << fill
            << "\" stroke=\"#222222\"/>\n";
      }
    }
    svg << "<text x=\"" << fmt6(width - margin - 140.0) << "\" y=\""
        << fmt6(margin + 16.0 * static_cast<double>(g))
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << labels[g] << " ("
        << (g % 2 == 0 ? "circle" : "square") << ")</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

/// CSV from a header row plus pre-formatted cells.
inline std::string csv_table(const std::vector<std::string>& header,
                             const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (std::size_t c = 0; c < header.size(); ++c)
    out << (c ? "," : "") << header[c];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("csv_table: row width mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << "\n";
  }
  return out.str();
}

}  // namespace crowdassign
