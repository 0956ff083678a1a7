#include "calcap/report_svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "calcap/error.hpp"

namespace calcap {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Costs of exactly zero are drawn at the plot floor.
double log_cost(double cost) { return cost > 0.0 ? std::log10(cost) : -20.0; }

}  // namespace

std::string convergence_svg(const std::vector<TraceEntry>& trace, const std::string& title) {
  if (trace.empty()) throw Error(ErrorCode::MalformedResult, "cannot plot an empty trace", "trace");
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  double it_min = trace.front().iteration, it_max = it_min;
  double y_min = log_cost(trace.front().cost), y_max = y_min;
  for (const auto& t : trace) {
    it_min = std::min<double>(it_min, t.iteration);
    it_max = std::max<double>(it_max, t.iteration);
    y_min = std::min(y_min, log_cost(t.cost));
    y_max = std::max(y_max, log_cost(t.cost));
  }
  if (it_max == it_min) it_max = it_min + 1;
  if (y_max - y_min < 1e-9) {
    y_max += 0.5;
    y_min -= 0.5;
  }
  auto px = [&](double it) { return kLeft + (it - it_min) / (it_max - it_min) * (kW - kLeft - kRight); };
  auto py = [&](double y) { return kTop + (y_max - y) / (y_max - y_min) * (kH - kTop - kBottom); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" + title +
       "</text>\n";
  s += "<line x1=\"70\" y1=\"350\" x2=\"620\" y2=\"350\" stroke=\"black\"/>\n";
  s += "<line x1=\"70\" y1=\"40\" x2=\"70\" y2=\"350\" stroke=\"black\"/>\n";
  s += "<text x=\"345\" y=\"390\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">iteration</text>\n";
  s += "<text x=\"16\" y=\"195\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
       "transform=\"rotate(-90 16 195)\">log10(cost)</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = y_min + (y_max - y_min) * k / 4.0;
    s += "<text x=\"64\" y=\"" + fmt("%.1f", py(y) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + fmt("%.2f", y) + "</text>\n";
    const double it = it_min + (it_max - it_min) * k / 4.0;
    s += "<text x=\"" + fmt("%.1f", px(it)) +
         "\" y=\"366\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + fmt("%.0f", it) +
         "</text>\n";
  }
  s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i) s += " ";
    s += fmt("%.3f", px(trace[i].iteration)) + "," + fmt("%.3f", py(log_cost(trace[i].cost)));
  }
  s += "\"/>\n";
  for (const auto& t : trace) {
    s += "<circle cx=\"" + fmt("%.3f", px(t.iteration)) + "\" cy=\"" + fmt("%.3f", py(log_cost(t.cost))) +
         "\" r=\"3\" fill=\"steelblue\" data-iter=\"" + std::to_string(t.iteration) + "\" data-cost=\"" +
         fmt("%.17g", t.cost) + "\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string format_summary(const ResultDocument& doc) {
  std::string s;
  s += "Intrinsics\n";
  for (const auto& cam : doc.cameras) {
    const auto it = doc.intrinsics.find(cam);
    if (it == doc.intrinsics.end()) continue;
    s += "  " + cam + " (" + to_string(model_of(it->second)) + "):";
    if (const auto* p = std::get_if<PinholeIntrinsics>(&it->second)) {
      s += " fx=" + fmt("%.4f", p->fx) + " fy=" + fmt("%.4f", p->fy) + " cx=" + fmt("%.4f", p->cx) +
           " cy=" + fmt("%.4f", p->cy) + " k1=" + fmt("%.6f", p->k1) + " k2=" + fmt("%.6f", p->k2) +
           " k3=" + fmt("%.6f", p->k3) + " p1=" + fmt("%.6f", p->p1) + " p2=" + fmt("%.6f", p->p2);
    } else {
      const auto& d = std::get<DoubleSphereIntrinsics>(it->second);
      s += " fx=" + fmt("%.4f", d.fx) + " fy=" + fmt("%.4f", d.fy) + " cx=" + fmt("%.4f", d.cx) +
           " cy=" + fmt("%.4f", d.cy) + " xi=" + fmt("%.6f", d.xi) + " alpha=" + fmt("%.6f", d.alpha);
    }
    s += "\n";
  }
  s += "RMS reprojection error\n";
  s += "  camera          rms_px   views\n";
  for (const auto& cam : doc.cameras) {
    const auto r = doc.per_camera_rms.find(cam);
    const auto v = doc.per_view_rms.find(cam);
    char line[128];
    std::snprintf(line, sizeof line, "  %-14s %7.4f %7zu\n", cam.c_str(),
                  r == doc.per_camera_rms.end() ? std::nan("") : r->second,
                  v == doc.per_view_rms.end() ? std::size_t{0} : v->second.size());
    s += line;
  }
  s += "  overall        " + fmt("%7.4f", doc.rms_px) + "\n";
  if (doc.reference_from_camera.size() > 1) {
    s += "Extrinsics relative to " + (doc.cameras.empty() ? std::string("camera 0") : doc.cameras.front()) + "\n";
    for (const auto& cam : doc.cameras) {
      const auto e = doc.reference_from_camera.find(cam);
      if (e == doc.reference_from_camera.end()) continue;
      const Eigen::AngleAxisd aa(e->second.rotation);
      const Eigen::Vector3d& t = e->second.translation;
      s += "  " + cam + ": t = (" + fmt("%.4f", t.x()) + ", " + fmt("%.4f", t.y()) + ", " + fmt("%.4f", t.z()) +
           ") m, |t| = " + fmt("%.4f", t.norm()) + " m, rotation = " + fmt("%.3f", aa.angle() * 180.0 / M_PI) +
           " deg\n";
    }
  }
  s += "Trace: " + std::to_string(doc.trace.size()) + " entries";
  if (!doc.termination.empty()) s += ", terminated by " + doc.termination;
  s += "\n";
  return s;
}

}  // namespace calcap
