#include "calcap/config.hpp"

#include <cmath>
#include <functional>

#include "calcap/error.hpp"
#include "calcap/session_store.hpp"

namespace calcap {

using nlohmann::json;

namespace {

// Binds JSON keys of one object to typed fields; anything else is rejected.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::InvalidConfig, "expected an object", path_.empty() ? "<root>" : path_);
  }

  template <typename T>
  Section& field(const char* key, T& out) {
    known_.emplace(key, [this, key, &out](const json& v) {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(key, "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) fail(key, "expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) fail(key, "expected a number");
      }
      out = v.get<T>();
    });
    return *this;
  }

  Section& section(const char* key, std::function<void(const json&, const std::string&)> fn) {
    known_.emplace(key, [this, key, fn](const json& v) { fn(v, sub(key)); });
    return *this;
  }

  void apply() {
    for (const auto& [key, value] : j_.items()) {
      const auto it = known_.find(key);
      if (it == known_.end()) throw Error(ErrorCode::InvalidConfig, "unknown configuration key", sub(key));
      it->second(value);
    }
  }

 private:
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[noreturn]] void fail(const char* key, const std::string& msg) const {
    throw Error(ErrorCode::InvalidConfig, msg, sub(key));
  }

  const json& j_;
  std::string path_;
  std::map<std::string, std::function<void(const json&)>> known_;
};

void require(bool ok, const std::string& where, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::InvalidConfig, msg, where);
}

}  // namespace

PipelineConfig apply_config(const PipelineConfig& base, const json& j) {
  PipelineConfig cfg = base;
  Section root(j, "");
  root.section("extract",
               [&](const json& v, const std::string& p) {
                 Section(v, p)
                     .field("trigger_min_separation_s", cfg.extract.trigger_min_separation_s)
                     .field("snap_claps", cfg.extract.snap_claps)
                     .field("clap_snap_window_s", cfg.extract.clap_snap_window_s)
                     .field("refine_frames", cfg.extract.refine_frames)
                     .field("min_views", cfg.extract.min_views)
                     .apply();
               })
      .section("clap",
               [&](const json& v, const std::string& p) {
                 Section(v, p)
                     .field("window_s", cfg.clap.window_s)
                     .field("hop_s", cfg.clap.hop_s)
                     .field("ratio_k", cfg.clap.ratio_k)
                     .field("abs_floor", cfg.clap.abs_floor)
                     .field("peak_radius_s", cfg.clap.peak_radius_s)
                     .field("min_separation_s", cfg.clap.min_separation_s)
                     .apply();
               })
      .section("mfcc",
               [&](const json& v, const std::string& p) {
                 Section(v, p)
                     .field("window_s", cfg.mfcc.window_s)
                     .field("hop_s", cfg.mfcc.hop_s)
                     .field("n_mels", cfg.mfcc.n_mels)
                     .field("n_coeffs", cfg.mfcc.n_coeffs)
                     .apply();
               })
      .section("spotter",
               [&](const json& v, const std::string& p) {
                 Section(v, p)
                     .field("threshold", cfg.spotter.threshold)
                     .field("min_separation_s", cfg.spotter.min_separation_s)
                     .field("length_tolerance", cfg.spotter.length_tolerance)
                     .field("min_template_frames", cfg.spotter.min_template_frames)
                     .apply();
               })
      .section("sync",
               [&](const json& v, const std::string& p) {
                 Section(v, p)
                     .field("tolerance_factor", cfg.sync.tolerance_factor)
                     .field("sync_window_ms", cfg.sync.sync_window_ms)
                     .apply();
               })
      .section("quality",
               [&](const json& v, const std::string& p) {
                 Section(v, p)
                     .field("radius", cfg.quality.radius)
                     .field("absolute_floor", cfg.quality.absolute_floor)
                     .apply();
               })
      .section("solver",
               [&](const json& v, const std::string& p) {
                 Section(v, p)
                     .field("initial_lambda", cfg.solver.lm.initial_lambda)
                     .field("lambda_factor", cfg.solver.lm.lambda_factor)
                     .field("max_lambda", cfg.solver.lm.max_lambda)
                     .field("max_iterations", cfg.solver.lm.max_iterations)
                     .field("relative_cost_tolerance", cfg.solver.lm.relative_cost_tolerance)
                     .field("gradient_tolerance", cfg.solver.lm.gradient_tolerance)
                     .field("relative_step", cfg.solver.lm.relative_step)
                     .field("huber", cfg.solver.huber)
                     .field("huber_delta_px", cfg.solver.huber_delta_px)
                     .field("refine_intrinsics_with_extrinsics", cfg.solver.refine_intrinsics_with_extrinsics)
                     .field("assumed_fov_deg", cfg.solver.assumed_fov_deg)
                     .field("stall_rms_px", cfg.solver.stall_rms_px)
                     .field("min_views", cfg.solver.min_views)
                     .field("threads", cfg.solver.lm.threads)
                     .apply();
               })
      .section("target",
               [&](const json& v, const std::string& p) {
                 Section(v, p)
                     .field("rows", cfg.target.rows)
                     .field("cols", cfg.target.cols)
                     .field("spacing_m", cfg.target.spacing_m)
                     .apply();
               })
      .field("max_rms_px", cfg.max_rms_px)
      .section("models",
               [&](const json& v, const std::string& p) {
                 require(v.is_object(), p, "expected an object of camera -> model");
                 for (const auto& [cam, m] : v.items()) {
                   require(m.is_string(), p + "." + cam, "expected a model name");
                   try {
                     cfg.models[cam] = camera_model_from_string(m.get<std::string>());
                   } catch (const Error& e) {
                     throw Error(ErrorCode::InvalidConfig, e.what(), p + "." + cam);
                   }
                 }
               })
      .section("image_sizes", [&](const json& v, const std::string& p) {
        require(v.is_object(), p, "expected an object of camera -> [width, height]");
        for (const auto& [cam, s] : v.items()) {
          require(s.is_array() && s.size() == 2 && s[0].is_number_integer() && s[1].is_number_integer(),
                  p + "." + cam, "expected [width, height]");
          cfg.image_sizes[cam] = {s[0].get<int>(), s[1].get<int>()};
        }
      });
  root.apply();
  validate_config(cfg);
  return cfg;
}

void validate_config(const PipelineConfig& cfg) {
  require(cfg.extract.trigger_min_separation_s >= 0.0, "extract.trigger_min_separation_s", "must be >= 0");
  require(cfg.extract.clap_snap_window_s >= 0.0, "extract.clap_snap_window_s", "must be >= 0");
  require(cfg.extract.min_views >= 1, "extract.min_views", "must be >= 1");
  require(cfg.clap.window_s > 0.0 && cfg.clap.hop_s > 0.0, "clap", "window and hop must be positive");
  require(cfg.clap.ratio_k > 0.0 && cfg.clap.abs_floor >= 0.0, "clap", "thresholds must be positive");
  require(cfg.mfcc.window_s > 0.0 && cfg.mfcc.hop_s > 0.0, "mfcc", "window and hop must be positive");
  require(cfg.mfcc.n_mels >= 1 && cfg.mfcc.n_coeffs >= 1 && cfg.mfcc.n_coeffs <= cfg.mfcc.n_mels, "mfcc",
          "need 1 <= n_coeffs <= n_mels");
  require(cfg.spotter.threshold > 0.0, "spotter.threshold", "must be positive");
  require(cfg.spotter.length_tolerance >= 0.0 && cfg.spotter.length_tolerance < 1.0, "spotter.length_tolerance",
          "must lie in [0, 1)");
  require(cfg.sync.tolerance_factor > 0.0, "sync.tolerance_factor", "must be positive");
  require(cfg.sync.sync_window_ms > 0.0, "sync.sync_window_ms", "must be positive");
  require(cfg.quality.radius >= 0, "quality.radius", "must be >= 0");
  require(cfg.solver.lm.initial_lambda > 0.0, "solver.initial_lambda", "must be positive");
  require(cfg.solver.lm.lambda_factor > 1.0, "solver.lambda_factor", "must exceed 1");
  require(cfg.solver.lm.max_iterations >= 1, "solver.max_iterations", "must be >= 1");
  require(cfg.solver.lm.relative_step > 0.0, "solver.relative_step", "must be positive");
  require(cfg.solver.huber_delta_px > 0.0, "solver.huber_delta_px", "must be positive");
  require(cfg.solver.assumed_fov_deg > 0.0, "solver.assumed_fov_deg", "must be positive");
  require(cfg.solver.min_views >= 3, "solver.min_views", "must be >= 3");
  require(cfg.solver.lm.threads >= 1, "solver.threads", "must be >= 1");
  require(cfg.target.rows >= 2 && cfg.target.cols >= 2, "target", "need at least 2x2 corners");
  require(cfg.target.spacing_m > 0.0, "target.spacing_m", "must be positive");
  require(cfg.max_rms_px > 0.0, "max_rms_px", "must be positive");
  for (const auto& [cam, s] : cfg.image_sizes) {
    require(s.width > 0 && s.height > 0, "image_sizes." + cam, "must be positive");
  }
}

PipelineConfig load_config(const std::filesystem::path& path, const PipelineConfig& base) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what(), path.string());
  }
  return apply_config(base, j);
}

json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["extract"] = {{"trigger_min_separation_s", cfg.extract.trigger_min_separation_s},
                  {"snap_claps", cfg.extract.snap_claps},
                  {"clap_snap_window_s", cfg.extract.clap_snap_window_s},
                  {"refine_frames", cfg.extract.refine_frames},
                  {"min_views", cfg.extract.min_views}};
  j["clap"] = {{"window_s", cfg.clap.window_s},       {"hop_s", cfg.clap.hop_s},
               {"ratio_k", cfg.clap.ratio_k},         {"abs_floor", cfg.clap.abs_floor},
               {"peak_radius_s", cfg.clap.peak_radius_s}, {"min_separation_s", cfg.clap.min_separation_s}};
  j["mfcc"] = {{"window_s", cfg.mfcc.window_s},
               {"hop_s", cfg.mfcc.hop_s},
               {"n_mels", cfg.mfcc.n_mels},
               {"n_coeffs", cfg.mfcc.n_coeffs}};
  j["spotter"] = {{"threshold", cfg.spotter.threshold},
                  {"min_separation_s", cfg.spotter.min_separation_s},
                  {"length_tolerance", cfg.spotter.length_tolerance},
                  {"min_template_frames", cfg.spotter.min_template_frames}};
  j["sync"] = {{"tolerance_factor", cfg.sync.tolerance_factor}, {"sync_window_ms", cfg.sync.sync_window_ms}};
  j["quality"] = {{"radius", cfg.quality.radius}, {"absolute_floor", cfg.quality.absolute_floor}};
  j["solver"] = {{"initial_lambda", cfg.solver.lm.initial_lambda},
                 {"lambda_factor", cfg.solver.lm.lambda_factor},
                 {"max_lambda", cfg.solver.lm.max_lambda},
                 {"max_iterations", cfg.solver.lm.max_iterations},
                 {"relative_cost_tolerance", cfg.solver.lm.relative_cost_tolerance},
                 {"gradient_tolerance", cfg.solver.lm.gradient_tolerance},
                 {"relative_step", cfg.solver.lm.relative_step},
                 {"huber", cfg.solver.huber},
                 {"huber_delta_px", cfg.solver.huber_delta_px},
                 {"refine_intrinsics_with_extrinsics", cfg.solver.refine_intrinsics_with_extrinsics},
                 {"assumed_fov_deg", cfg.solver.assumed_fov_deg},
                 {"stall_rms_px", cfg.solver.stall_rms_px},
                 {"min_views", cfg.solver.min_views},
                 {"threads", cfg.solver.lm.threads}};
  j["target"] = {{"rows", cfg.target.rows}, {"cols", cfg.target.cols}, {"spacing_m", cfg.target.spacing_m}};
  j["max_rms_px"] = cfg.max_rms_px;
  json models = json::object();
  for (const auto& [cam, m] : cfg.models) models[cam] = to_string(m);
  j["models"] = models;
  json sizes = json::object();
  for (const auto& [cam, s] : cfg.image_sizes) sizes[cam] = {s.width, s.height};
  j["image_sizes"] = sizes;
  return j;
}

}  // namespace calcap
