#include "calcap/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "calcap/audio_dsp.hpp"
#include "calcap/calib_io.hpp"
#include "calcap/image_quality.hpp"
#include "calcap/report_svg.hpp"
#include "calcap/session_store.hpp"
#include "calcap/synth.hpp"
#include "calcap/time_sync.hpp"

namespace calcap {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::DisconnectedGraph:
    case ErrorCode::InsufficientSharedViews:
      return kExitGraph;
    case ErrorCode::DegenerateConfiguration:
    case ErrorCode::IllConditioned:
    case ErrorCode::DivergedOrStalled:
    case ErrorCode::NotEnoughViews:
    case ErrorCode::BehindCamera:
    case ErrorCode::NoConvergence:
    case ErrorCode::OutsideValidRegion:
    case ErrorCode::OutsideDomain:
      return kExitSolver;
    case ErrorCode::DriftTooLarge:
    case ErrorCode::DegenerateAnchors:
    case ErrorCode::AudioTooShort:
    case ErrorCode::TemplateTooShort:
    case ErrorCode::ImageTooSmall:
      return kExitExtraction;
    default:
      return kExitInput;
  }
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void report_error(std::ostream& err, const Error& e) {
  err << "error: " << e.what() << "\n";
}

}  // namespace

PipelineConfig session_config(const fs::path& session_dir, const std::optional<fs::path>& explicit_config) {
  PipelineConfig cfg;
  if (fs::exists(session_dir / "pipeline.json")) cfg = load_config(session_dir / "pipeline.json", cfg);
  if (explicit_config) {
    if (!fs::exists(*explicit_config)) {
      throw Error(ErrorCode::MissingFile, "config file not found", explicit_config->string());
    }
    cfg = load_config(*explicit_config, cfg);
  }
  return cfg;
}

ViewSelection selection_from_sync_report(const json& report) {
  ViewSelection sel;
  try {
    for (const auto& t : report.at("triggers")) {
      const int view = t.at("view_id").get<int>();
      if (t.at("status").get<std::string>() == "full") sel.synchronized.insert(view);
      for (const auto& [cam, res] : t.at("cameras").items()) {
        if (res.at("resolved").get<bool>()) sel.usable[cam].insert(view);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedManifest, std::string("malformed sync report: ") + e.what());
  }
  return sel;
}

// ---------------------------------------------------------------- extract

namespace {

std::vector<SpotterTemplate> load_templates(const fs::path& dir, const MfccConfig& mcfg) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "spotter template directory not found", dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<SpotterTemplate> out;
  for (const auto& f : files) out.push_back({f.stem().string(), mfcc(load_wav(f), mcfg)});
  return out;
}

json resolution_json(const CameraResolution& r,
                     const std::optional<QualityScore>& score, std::optional<std::size_t> nearest) {
  json j;
  j["resolved"] = r.resolved();
  if (r.frame) {
    j["frame_index"] = r.frame->frame_index;
    j["path"] = r.frame->frame.path;
    j["stamp_ns"] = r.frame->frame.stamp.nanos;
    j["delta_ms"] = static_cast<double>(r.frame->delta_ns) * 1e-6;
    if (nearest) j["nearest_index"] = *nearest;
    if (score) {
      j["chosen_offset"] = score->chosen_offset;
      j["laplacian_variance"] = score->laplacian_variance;
      j["tenengrad"] = score->tenengrad;
      j["quality_accepted"] = score->accepted;
    }
  } else if (r.rejection) {
    j["reason"] = to_string(r.rejection->reason);
    j["nearest_delta_ms"] = static_cast<double>(r.rejection->nearest_delta_ns) * 1e-6;
  }
  return j;
}

}  // namespace

int cmd_extract(const ExtractOptions& opts, std::ostream& out, std::ostream& err) {
  SessionManifest manifest;
  PipelineConfig cfg;
  AudioBuffer audio;
  try {
    cfg = session_config(opts.session_dir, opts.config);
    if (opts.threads) cfg.solver.lm.threads = *opts.threads;
    manifest = load_manifest(opts.session_dir / "manifest.json");
    audio = load_wav(manifest.audio_path);
  } catch (const Error& e) {
    report_error(err, e);
    return kExitInput;
  }

  try {
    // Trigger instants on the audio timeline.
    std::vector<TriggerHit> hits;
    std::string source = "none";
    if (opts.spotter_dir) {
      fs::path dir = *opts.spotter_dir;
      if (!fs::exists(dir) && fs::exists(opts.session_dir / dir)) dir = opts.session_dir / dir;
      std::vector<SpotterTemplate> templates;
      try {
        templates = load_templates(dir, cfg.mfcc);
      } catch (const Error& e) {
        report_error(err, e);
        return exit_code_for(e.code()) == kExitExtraction ? kExitExtraction : kExitInput;
      }
      if (!templates.empty()) {
        hits = spot_keyword(mfcc(audio, cfg.mfcc), templates, cfg.spotter);
        source = "spotter";
      }
    } else if (!manifest.transcript_path.empty()) {
      Transcript transcript;
      try {
        transcript = parse_transcript(manifest.transcript_path);
      } catch (const Error& e) {
        report_error(err, e);
        return kExitInput;
      }
      hits = find_triggers(transcript.words, manifest.trigger_word, cfg.extract.trigger_min_separation_s);
      source = "transcript";
      if (transcript.dropped) out << "transcript: dropped " << transcript.dropped << " untimed words\n";
    }

    // Clock map from the clap anchors, optionally snapped to detected claps.
    const auto claps = detect_claps(audio, cfg.clap);
    std::vector<ClapAnchor> anchors = manifest.clap_anchors;
    json anchor_log = json::array();
    for (auto& a : anchors) {
      json entry = {{"manifest_audio_time_s", a.audio_time_s}, {"camera_epoch_ns", a.camera_epoch.nanos}};
      if (cfg.extract.snap_claps) {
        const ClapEvent* best = nullptr;
        for (const auto& c : claps) {
          const double d = std::abs(c.audio_time_s - a.audio_time_s);
          if (d <= cfg.extract.clap_snap_window_s && (!best || d < std::abs(best->audio_time_s - a.audio_time_s))) {
            best = &c;
          }
        }
        if (best) a.audio_time_s = best->audio_time_s;
        entry["snapped"] = best != nullptr;
      }
      entry["audio_time_s"] = a.audio_time_s;
      anchor_log.push_back(entry);
    }
    const ClockMap clock = fit_clock_map(anchors);

    // Resolve and refine frames per trigger.
    const FrameLoader loader = disk_loader(manifest.root);
    std::vector<TriggerEvent> events;
    json triggers = json::array();
    std::string extracted = "view_id,camera_id,path,stamp_ns\n";
    for (std::size_t i = 0; i < hits.size(); ++i) {
      const Timestamp epoch = map_trigger(clock, hits[i]);
      TriggerEvent ev = resolve_frames(manifest, epoch, cfg.sync);
      ev.audio_time_s = hits[i].audio_time_s;
      json cams = json::object();
      for (std::size_t c = 0; c < ev.per_camera.size(); ++c) {
        auto& res = ev.per_camera[c];
        const CameraStreamDescriptor& stream = manifest.cameras[c];
        std::optional<QualityScore> score;
        std::optional<std::size_t> nearest;
        if (res.frame) {
          nearest = res.frame->frame_index;
          if (cfg.extract.refine_frames) {
            const RefinedSelection sel = refine_selection(stream, res.frame->frame_index, loader, cfg.quality);
            res.frame->frame_index = sel.frame_index;
            res.frame->frame = stream.frames[sel.frame_index];
            res.frame->delta_ns = res.frame->frame.stamp.nanos - epoch.nanos;
            score = sel.score;
          }
        }
        cams[stream.camera_id] = resolution_json(res, score, nearest);
      }
      // Status after refinement: the refined frames are the ones extracted.
      ev.status = classify(ev.per_camera, cfg.sync.sync_window_ms);
      for (const auto& res : ev.per_camera) {
        if (res.frame) {
          extracted += std::to_string(i) + "," + res.camera_id + "," + res.frame->frame.path + "," +
                       std::to_string(res.frame->frame.stamp.nanos) + "\n";
        }
      }
      triggers.push_back({{"view_id", i},
                          {"audio_time_s", hits[i].audio_time_s},
                          {"camera_epoch_ns", epoch.nanos},
                          {"source", hits[i].source == TriggerSource::Transcript ? "transcript" : "spotter"},
                          {"matched_text", hits[i].matched_text},
                          {"score", hits[i].score},
                          {"status", to_string(ev.status)},
                          {"cameras", cams}});
      events.push_back(std::move(ev));
    }
    const SyncReport summary = summarize(events);

    json report;
    json cam_ids = json::array();
    for (const auto& c : manifest.cameras) cam_ids.push_back(c.camera_id);
    report["cameras"] = cam_ids;
    report["trigger_source"] = source;
    report["clock_map"] = {{"scale_a", clock.scale_a},
                           {"offset_ns", clock.offset.nanos},
                           {"residual_rms_s", clock.residual_rms_s},
                           {"anchors", anchor_log}};
    json clap_list = json::array();
    for (const auto& c : claps) {
      clap_list.push_back(
          {{"audio_time_s", c.audio_time_s}, {"peak_amplitude", c.peak_amplitude}, {"envelope_ratio", c.envelope_ratio}});
    }
    report["claps_detected"] = clap_list;
    report["summary"] = {{"n_triggers", summary.n_triggers},
                         {"n_fully_synchronized", summary.n_fully_synchronized},
                         {"n_partial", summary.n_partial},
                         {"n_rejected", summary.n_rejected},
                         {"rejections_per_camera", summary.rejections_per_camera}};
    report["triggers"] = triggers;
    write_text_file(opts.session_dir / "sync_report.json", report.dump(2) + "\n");
    write_text_file(opts.session_dir / "extracted_frames.csv", extracted);

    out << "triggers: " << summary.n_triggers << " (" << source << ")\n"
        << "fully synchronized: " << summary.n_fully_synchronized << ", partial: " << summary.n_partial
        << ", rejected: " << summary.n_rejected << "\n"
        << "clock: scale " << fmt("%.8f", clock.scale_a) << ", residual " << fmt("%.3g", clock.residual_rms_s)
        << " s\n";
    if (static_cast<int>(summary.n_fully_synchronized) < cfg.extract.min_views) {
      err << "error: InsufficientTriggers: " << summary.n_fully_synchronized
          << " fully synchronized events, need " << cfg.extract.min_views << "\n";
      return kExitExtraction;
    }
    return kExitOk;
  } catch (const Error& e) {
    report_error(err, e);
    const int code = exit_code_for(e.code());
    return code == kExitInput ? kExitInput : kExitExtraction;
  }
}

// -------------------------------------------------------------- calibrate

int cmd_calibrate(const CalibrateOptions& opts, std::ostream& out, std::ostream& err) {
  CalibrationProblem problem;
  PipelineConfig cfg;
  ViewSelection selection;
  try {
    cfg = session_config(opts.session_dir, opts.config);
    if (opts.threads) cfg.solver.lm.threads = *opts.threads;
    if (opts.max_rms_px) cfg.max_rms_px = *opts.max_rms_px;
    for (const auto& [cam, model] : opts.model_overrides) cfg.models[cam] = camera_model_from_string(model);
    validate_config(cfg);

    const fs::path sync_path = opts.sync_report.value_or(opts.session_dir / "sync_report.json");
    if (!fs::exists(sync_path)) {
      throw Error(ErrorCode::MissingFile, "extraction report not found (run extract first)", sync_path.string());
    }
    json report;
    try {
      report = json::parse(read_text_file(sync_path));
      problem.cameras = report.at("cameras").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedManifest, std::string("malformed sync report: ") + e.what(), sync_path.string());
    }
    selection = selection_from_sync_report(report);

    const fs::path obs_path = opts.observations.value_or(opts.session_dir / "observations.csv");
    if (!fs::exists(obs_path)) throw Error(ErrorCode::MissingFile, "observations not found", obs_path.string());
    problem.observations = read_observations(obs_path);
    problem.target = TargetGeometry::grid(cfg.target.rows, cfg.target.cols, cfg.target.spacing_m);
    std::size_t unknown = 0;
    std::erase_if(problem.observations, [&](const Observation& o) {
      const bool drop = std::find(problem.cameras.begin(), problem.cameras.end(), o.camera_id) == problem.cameras.end();
      unknown += drop;
      return drop;
    });
    if (unknown) err << "warning: ignored " << unknown << " observations of cameras not in the session\n";
    for (const auto& o : problem.observations) {
      if (o.corner_id >= static_cast<int>(problem.target.points.size())) {
        throw Error(ErrorCode::MalformedObservations,
                    "corner id " + std::to_string(o.corner_id) + " exceeds the target size", obs_path.string());
      }
    }
    for (const auto& cam : problem.cameras) {
      const auto m = cfg.models.find(cam);
      problem.models[cam] = m == cfg.models.end() ? CameraModel::Pinhole : m->second;
      const auto s = cfg.image_sizes.find(cam);
      if (s != cfg.image_sizes.end()) problem.image_sizes[cam] = s->second;
    }
  } catch (const Error& e) {
    report_error(err, e);
    return kExitInput;
  }

  CalibrationResult result;
  try {
    result = calibrate(problem, cfg.solver, selection);
  } catch (const Error& e) {
    report_error(err, e);
    return exit_code_for(e.code());
  }

  const fs::path out_path = opts.output.value_or(opts.session_dir / "calibration.json");
  try {
    write_text_file(out_path, result_to_json(result, problem.cameras).dump(2) + "\n");
  } catch (const Error& e) {
    report_error(err, e);
    return kExitInput;
  }
  out << "cameras: " << problem.cameras.size() << ", observations used: " << result.n_observations << "\n";
  for (const auto& cam : problem.cameras) {
    const auto r = result.per_camera_rms.find(cam);
    if (r != result.per_camera_rms.end()) out << "  " << cam << " rms " << fmt("%.4f", r->second) << " px\n";
  }
  out << "rms: " << fmt("%.4f", result.rms_px) << " px (limit " << fmt("%.3f", cfg.max_rms_px) << ")\n";
  out << "wrote " << out_path.string() << "\n";
  if (!(result.rms_px <= cfg.max_rms_px)) {
    err << "error: CalibrationDiverged: rms " << fmt("%.4f", result.rms_px) << " px exceeds "
        << fmt("%.3f", cfg.max_rms_px) << " px\n";
    return kExitSolver;
  }
  return kExitOk;
}

// ----------------------------------------------------------------- report

int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err) {
  ResultDocument doc;
  try {
    if (!fs::exists(opts.result)) throw Error(ErrorCode::MalformedResult, "result file not found", opts.result.string());
    doc = load_result(opts.result);
  } catch (const Error& e) {
    report_error(err, e);
    return kExitInput;
  }
  out << format_summary(doc);
  if (doc.trace.empty()) {
    err << "warning: empty convergence trace; no plot written\n";
    return kExitOk;
  }
  fs::path dir = opts.out_dir.value_or(opts.result.parent_path());
  if (dir.empty()) dir = ".";
  try {
    write_text_file(dir / "convergence.svg", convergence_svg(doc.trace));
  } catch (const Error& e) {
    report_error(err, e);
    return kExitInput;
  }
  out << "wrote " << (dir / "convergence.svg").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ synth

int cmd_synth(const SynthOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    SynthConfig cfg;
    if (opts.config) {
      if (!fs::exists(*opts.config)) throw Error(ErrorCode::MissingFile, "config not found", opts.config->string());
      json j;
      try {
        j = json::parse(read_text_file(*opts.config));
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, e.what(), opts.config->string());
      }
      cfg = synth_config_from_json(j);
    }
    if (opts.seed) cfg.seed = *opts.seed;
    const SessionSummary s = generate_session(cfg, opts.out_dir);
    out << "wrote session " << opts.out_dir.string() << ": " << s.manifest.cameras.size() << " cameras, "
        << cfg.n_events << " events, " << s.n_observations << " observations\n";
    return kExitOk;
  } catch (const Error& e) {
    report_error(err, e);
    return kExitInput;
  }
}

// -------------------------------------------------------------------- CLI

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speech-triggered multi-camera calibration capture", "calib-capture"};
  app.require_subcommand(1);

  ExtractOptions ex;
  std::string ex_session, ex_config, ex_spotter;
  int ex_threads = 0;
  auto* extract = app.add_subcommand("extract", "Resolve trigger words into synchronized sharp frames");
  extract->add_option("session", ex_session, "Session directory")->required();
  extract->add_option("--config", ex_config, "Pipeline config JSON");
  extract->add_option("--spotter", ex_spotter, "Directory of keyword template WAVs (fallback spotter)");
  extract->add_option("--threads", ex_threads, "Worker threads")->check(CLI::PositiveNumber);

  CalibrateOptions ca;
  std::string ca_session, ca_config, ca_obs, ca_out, ca_sync;
  std::vector<std::string> ca_models, ca_cameras;
  double ca_max_rms = 0.0;
  int ca_threads = 0;
  auto* calib = app.add_subcommand("calibrate", "Estimate intrinsics and extrinsics");
  calib->add_option("session", ca_session, "Session directory")->required();
  calib->add_option("--observations", ca_obs, "Observations CSV");
  calib->add_option("--sync-report", ca_sync, "Sync report from extract");
  calib->add_option("--output", ca_out, "Result JSON path");
  calib->add_option("--config", ca_config, "Pipeline config JSON");
  calib->add_option("--model", ca_models, "Camera model (pinhole|double_sphere), paired with --camera");
  calib->add_option("--camera", ca_cameras, "Camera id the matching --model applies to");
  calib->add_option("--max-rms", ca_max_rms, "Success threshold in px (default 0.5)")->check(CLI::PositiveNumber);
  calib->add_option("--threads", ca_threads, "Worker threads")->check(CLI::PositiveNumber);

  ReportOptions re;
  std::string re_result, re_out;
  auto* report = app.add_subcommand("report", "Summarize a result and plot convergence");
  report->add_option("result", re_result, "Result JSON")->required();
  report->add_option("--out-dir", re_out, "Where to write convergence.svg");

  SynthOptions sy;
  std::string sy_config, sy_out;
  std::uint64_t sy_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic session");
  std::vector<std::string> sy_args;
  synth->add_option("args", sy_args, "[config.json] out_dir")->required()->expected(1, 2);
  synth->add_option("--seed", sy_seed, "RNG seed");
  synth->add_option("--config", sy_config, "Synth config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitInput;
  }

  if (extract->parsed()) {
    ex.session_dir = ex_session;
    if (!ex_config.empty()) ex.config = ex_config;
    if (!ex_spotter.empty()) ex.spotter_dir = ex_spotter;
    if (extract->count("--threads")) ex.threads = ex_threads;
    return cmd_extract(ex, out, err);
  }
  if (calib->parsed()) {
    if (ca_models.size() != ca_cameras.size()) {
      err << "error: --model and --camera must be given the same number of times\n";
      return kExitInput;
    }
    ca.session_dir = ca_session;
    if (!ca_config.empty()) ca.config = ca_config;
    if (!ca_obs.empty()) ca.observations = ca_obs;
    if (!ca_out.empty()) ca.output = ca_out;
    if (!ca_sync.empty()) ca.sync_report = ca_sync;
    for (std::size_t i = 0; i < ca_models.size(); ++i) ca.model_overrides.emplace_back(ca_cameras[i], ca_models[i]);
    if (calib->count("--max-rms")) ca.max_rms_px = ca_max_rms;
    if (calib->count("--threads")) ca.threads = ca_threads;
    return cmd_calibrate(ca, out, err);
  }
  if (report->parsed()) {
    re.result = re_result;
    if (!re_out.empty()) re.out_dir = re_out;
    return cmd_report(re, out, err);
  }
  if (synth->parsed()) {
    // A lone positional is the output directory.
    sy_out = sy_args.back();
    if (sy_args.size() == 2) {
      if (!sy_config.empty()) {
        err << "error: synth config given twice\n";
        return kExitInput;
      }
      sy_config = sy_args.front();
    }
    if (!sy_config.empty()) sy.config = sy_config;
    sy.out_dir = sy_out;
    if (synth->count("--seed")) sy.seed = sy_seed;
    return cmd_synth(sy, out, err);
  }
  return kExitInput;
}

}  // namespace calcap
