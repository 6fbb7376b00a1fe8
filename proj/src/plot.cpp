#include "ctxlstm/plot.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "ctxlstm/errors.hpp"

namespace ctxlstm {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const PlotPanel& panel, int width, int height) {
  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  auto extend = [&](Point p) {
    lo_x = std::min(lo_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_x = std::max(hi_x, p.x);
    hi_y = std::max(hi_y, p.y);
  };
  for (const auto& t : panel.tracks) std::for_each(t.points.begin(), t.points.end(), extend);
  std::for_each(panel.static_points.begin(), panel.static_points.end(), extend);
  if (!(lo_x <= hi_x)) lo_x = lo_y = 0.0, hi_x = hi_y = 1.0;
  const double margin = 30.0;
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  const double s = std::min(width, height) - 2 * margin;
  auto px = [&](Point p) {
    return Point{margin + (p.x - lo_x) / span * s, height - margin - (p.y - lo_y) / span * s};
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"10\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">"
      << escape(panel.title) << "</text>\n";
  for (const auto& p : panel.static_points) {
    const Point q = px(p);
    out << "<rect class=\"static\" x=\"" << q.x - 5 << "\" y=\"" << q.y - 5
        << "\" width=\"10\" height=\"10\" fill=\"#444\"/>\n";
  }
  for (const auto& t : panel.tracks) {
    out << "<polyline fill=\"none\" stroke=\"" << t.color << "\" stroke-width=\"1.5\"";
    if (t.dashed) out << " stroke-dasharray=\"4 3\"";
    out << " data-label=\"" << escape(t.label) << "\" points=\"";
    for (std::size_t i = 0; i < t.points.size(); ++i) {
      const Point q = px(t.points[i]);
      out << (i ? " " : "") << q.x << ',' << q.y;
    }
    out << "\"/>\n";
  }
  // Legend: one entry per distinct track kind.
  std::vector<std::pair<std::string, std::string>> legend;
  for (const auto& t : panel.tracks) {
    const std::string kind = t.label.substr(0, t.label.find(':'));
    if (std::none_of(legend.begin(), legend.end(), [&](const auto& e) { return e.first == kind; })) {
      legend.emplace_back(kind, t.color);
    }
  }
  for (std::size_t i = 0; i < legend.size(); ++i) {
    const double y = 36.0 + 16.0 * static_cast<double>(i);
    out << "<line x1=\"10\" y1=\"" << y << "\" x2=\"30\" y2=\"" << y << "\" stroke=\""
        << legend[i].second << "\" stroke-width=\"2\"/>";
    out << "<text x=\"36\" y=\"" << y + 4 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << escape(legend[i].first) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<PlotPanel> panels_from_results(const std::vector<ResultRow>& rows,
                                           const std::vector<Point>& static_points) {
  using Key = std::tuple<std::string, int, std::size_t>;
  std::map<Key, std::vector<const ResultRow*>> groups;
  std::vector<std::string> variants;
  for (const auto& r : rows) {
    groups[{r.scene, r.fold, r.window}].push_back(&r);
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) {
      variants.push_back(r.variant);
    }
  }
  std::vector<PlotPanel> panels;
  for (const auto& [key, members] : groups) {
    PlotPanel panel;
    panel.title = std::get<0>(key) + " fold " + std::to_string(std::get<1>(key)) + " window " +
                  std::to_string(std::get<2>(key));
    panel.static_points = static_points;
    std::map<int, std::map<int, Point>> truth;
    std::map<std::pair<std::string, int>, std::map<int, Point>> pred;
    for (const auto* r : members) {
      truth[r->agent][r->step] = r->truth;
      pred[{r->variant, r->agent}][r->step] = r->pred;
    }
    auto flatten = [](const std::map<int, Point>& m) {
      std::vector<Point> v;
      for (const auto& [step, p] : m) v.push_back(p);
      return v;
    };
    for (const auto& [agent, steps] : truth) {
      panel.tracks.push_back({"truth:" + std::to_string(agent), "#000000", flatten(steps), false});
    }
    for (const auto& [key2, steps] : pred) {
      const auto idx = static_cast<std::size_t>(
          std::find(variants.begin(), variants.end(), key2.first) - variants.begin());
      panel.tracks.push_back({key2.first + ":" + std::to_string(key2.second),
                              kPalette[idx % std::size(kPalette)], flatten(steps), true});
    }
    panels.push_back(std::move(panel));
  }
  return panels;
}

std::vector<std::filesystem::path> write_panels(const std::filesystem::path& dir,
                                                const std::vector<PlotPanel>& panels) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < panels.size(); ++i) {
    std::string name = panels[i].title;
    std::replace(name.begin(), name.end(), ' ', '_');
    const auto path = dir / (name + ".svg");
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << render_svg(panels[i]);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace ctxlstm
