#include "calcap/calib_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "calcap/error.hpp"
#include "calcap/session_store.hpp"

namespace calcap {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

// Shortest representation that round-trips.
std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::vector<Observation> parse_observations(const std::string& text, const std::string& where) {
  std::vector<Observation> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(trim(col));
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    if (line_no == 1 && cols.size() == 5 && cols[0] == "camera_id" && cols[1] == "view_id" &&
        cols[2] == "corner_id" && cols[3] == "u" && cols[4] == "v") {
      continue;
    }
    if (cols.size() != 5) {
      throw Error(ErrorCode::MalformedObservations, "expected 5 columns, got " + std::to_string(cols.size()), where,
                  line_no);
    }
    Observation obs;
    obs.camera_id = cols[0];
    double u = 0.0, v = 0.0;
    if (obs.camera_id.empty() || !parse_number(cols[1], obs.view_id) || !parse_number(cols[2], obs.corner_id) ||
        !parse_number(cols[3], u) || !parse_number(cols[4], v)) {
      throw Error(ErrorCode::MalformedObservations, "unparseable row '" + line + "'", where, line_no);
    }
    if (obs.corner_id < 0 || !std::isfinite(u) || !std::isfinite(v)) {
      throw Error(ErrorCode::MalformedObservations, "negative corner id or non-finite pixel", where, line_no);
    }
    obs.pixel = Point2(u, v);
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<Observation> read_observations(const std::filesystem::path& path) {
  return parse_observations(read_text_file(path), path.string());
}

void write_observations(const std::filesystem::path& path, const std::vector<Observation>& obs) {
  std::string text = "camera_id,view_id,corner_id,u,v\n";
  for (const auto& o : obs) {
    text += o.camera_id + "," + std::to_string(o.view_id) + "," + std::to_string(o.corner_id) + "," +
            format_double(o.pixel.x()) + "," + format_double(o.pixel.y()) + "\n";
  }
  write_text_file(path, text);
}

// ------------------------------------------------------------ intrinsics

namespace {

const char* const kPinholeNames[] = {"fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2"};
const char* const kDoubleSphereNames[] = {"fx", "fy", "cx", "cy", "xi", "alpha"};

}  // namespace

json intrinsics_to_json(const Intrinsics& k) {
  const CameraModel model = model_of(k);
  const auto values = intrinsics_to_vector(k);
  const char* const* names = model == CameraModel::Pinhole ? kPinholeNames : kDoubleSphereNames;
  json params = json::object();
  for (std::size_t i = 0; i < values.size(); ++i) params[names[i]] = values[i];
  return {{"model", to_string(model)}, {"params", params}};
}

Intrinsics intrinsics_from_json(const json& j) {
  if (!j.is_object() || !j.contains("model") || !j["model"].is_string() || !j.contains("params") ||
      !j["params"].is_object()) {
    throw Error(ErrorCode::MalformedResult, "intrinsics need 'model' and 'params'");
  }
  const CameraModel model = camera_model_from_string(j["model"].get<std::string>());
  const char* const* names = model == CameraModel::Pinhole ? kPinholeNames : kDoubleSphereNames;
  const int n = num_params(model);
  std::vector<double> values(n);
  for (int i = 0; i < n; ++i) {
    const auto& p = j["params"];
    if (!p.contains(names[i]) || !p[names[i]].is_number()) {
      throw Error(ErrorCode::MalformedResult, "missing intrinsic parameter", std::string("params.") + names[i]);
    }
    values[i] = p[names[i]].get<double>();
  }
  return intrinsics_from_vector(model, values);
}

json pose_to_json(const Pose& p) {
  const Eigen::Quaterniond q = p.rotation.normalized();
  return {{"quaternion", {q.w(), q.x(), q.y(), q.z()}},
          {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

Pose pose_from_json(const json& j) {
  auto numbers = [&](const char* key, std::size_t n) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_array() || j[key].size() != n) {
      throw Error(ErrorCode::MalformedResult, "pose needs a " + std::to_string(n) + "-element array", key);
    }
    std::vector<double> v;
    for (const auto& x : j[key]) {
      if (!x.is_number()) throw Error(ErrorCode::MalformedResult, "pose entries must be numbers", key);
      v.push_back(x.get<double>());
    }
    return v;
  };
  const auto q = numbers("quaternion", 4);
  const auto t = numbers("translation", 3);
  Pose p;
  p.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
  if (!(p.rotation.norm() > 0.0)) throw Error(ErrorCode::MalformedResult, "zero quaternion", "quaternion");
  p.rotation.normalize();
  p.translation = Eigen::Vector3d(t[0], t[1], t[2]);
  return p;
}

// ---------------------------------------------------------------- result

json result_to_json(const CalibrationResult& result, const std::vector<std::string>& camera_order) {
  json doc;
  doc["cameras"] = camera_order;
  json intr = json::object();
  json extr = json::object();
  json per_cam = json::object();
  for (const auto& cam : camera_order) {
    const auto it = result.state.intrinsics.find(cam);
    if (it == result.state.intrinsics.end()) continue;
    intr[cam] = intrinsics_to_json(it->second);
    const auto e = result.state.extrinsics.find(cam);
    if (e != result.state.extrinsics.end()) extr[cam] = pose_to_json(pose_inverse(e->second));
    const auto r = result.per_camera_rms.find(cam);
    if (r != result.per_camera_rms.end()) per_cam[cam] = r->second;
  }
  doc["intrinsics"] = intr;
  doc["extrinsics"] = extr;
  doc["extrinsics_convention"] = "reference_from_camera";
  doc["rms_px"] = result.rms_px;
  doc["n_observations"] = result.n_observations;
  doc["per_camera_rms"] = per_cam;
  json per_view = json::object();
  for (const auto& [cam, views] : result.per_view_rms) {
    json v = json::object();
    for (const auto& [view, rms] : views) v[std::to_string(view)] = rms;
    per_view[cam] = v;
  }
  doc["per_view_rms"] = per_view;
  json trace = json::array();
  for (const auto& t : result.trace) trace.push_back({{"iter", t.iteration}, {"cost", t.cost}, {"lambda", t.lambda}});
  doc["trace"] = trace;
  doc["termination"] = to_string(result.termination);
  json stages = json::array();
  for (const auto& s : result.stages) {
    json st = json::array();
    for (const auto& t : s.trace) st.push_back({{"iter", t.iteration}, {"cost", t.cost}, {"lambda", t.lambda}});
    stages.push_back({{"name", s.name}, {"termination", to_string(s.termination)}, {"trace", st}});
  }
  doc["stages"] = stages;
  return doc;
}

ResultDocument result_from_json(const json& j) {
  try {
    if (!j.is_object()) throw Error(ErrorCode::MalformedResult, "result must be a JSON object");
    for (const char* key : {"intrinsics", "rms_px", "trace"}) {
      if (!j.contains(key)) throw Error(ErrorCode::MalformedResult, "missing field", key);
    }
    ResultDocument doc;
    if (j.contains("cameras")) doc.cameras = j["cameras"].get<std::vector<std::string>>();
    if (!j["intrinsics"].is_object()) throw Error(ErrorCode::MalformedResult, "must be an object", "intrinsics");
    for (const auto& [cam, k] : j["intrinsics"].items()) {
      doc.intrinsics[cam] = intrinsics_from_json(k);
      if (!j.contains("cameras")) doc.cameras.push_back(cam);
    }
    if (j.contains("extrinsics")) {
      for (const auto& [cam, p] : j["extrinsics"].items()) doc.reference_from_camera[cam] = pose_from_json(p);
    }
    if (!j["rms_px"].is_number()) throw Error(ErrorCode::MalformedResult, "must be a number", "rms_px");
    doc.rms_px = j["rms_px"].get<double>();
    if (j.contains("per_camera_rms")) {
      for (const auto& [cam, v] : j["per_camera_rms"].items()) doc.per_camera_rms[cam] = v.get<double>();
    }
    if (j.contains("per_view_rms")) {
      for (const auto& [cam, views] : j["per_view_rms"].items()) {
        for (const auto& [view, v] : views.items()) doc.per_view_rms[cam][std::stoi(view)] = v.get<double>();
      }
    }
    if (!j["trace"].is_array()) throw Error(ErrorCode::MalformedResult, "must be an array", "trace");
    for (const auto& t : j["trace"]) {
      if (!t.is_object() || !t.contains("iter") || !t.contains("cost") || !t.contains("lambda")) {
        throw Error(ErrorCode::MalformedResult, "trace entries need iter, cost, lambda", "trace");
      }
      doc.trace.push_back({t["iter"].get<int>(), t["cost"].get<double>(), t["lambda"].get<double>()});
    }
    if (j.contains("termination")) doc.termination = j["termination"].get<std::string>();
    return doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedResult, e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorCode::MalformedResult, e.what(), "per_view_rms");
  }
}

ResultDocument load_result(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedResult, e.what(), path.string());
  }
  return result_from_json(j);
}

}  // namespace calcap
