#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdassign/anchors.hpp"
#include "crowdassign/assign.hpp"
#include "crowdassign/scene.hpp"

namespace crowdassign {

/// Configuration problem with the offending field's dotted path in the
/// message, e.g. "config error at assigner.k: ...".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error("config error at " + (path.empty() ? "<root>" : path) +
                           ": " + what),
        path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct RetinaNetParams {
  double pos_iou = 0.5;
  double neg_iou = 0.4;
};

struct FcosParams {
  double radius = 1.5;
};

struct AtssParams {
  int top_candidates = 9;
};

struct MetricParams {
  double nms_iou = 0.5;
  double match_iou = 0.5;
  double score_floor = 0.05;
};

struct SeedParams {
  std::uint64_t base = 1;
  int count = 20;
};

struct SceneParams {
  SceneConfig geometry;
  int n_people = 12;
  double crowd_iou = 0.4;
};

struct HarnessConfig {
  std::string assigner = "lla";
  LlaConfig lla;
  RetinaNetParams retinanet;
  FcosParams fcos;
  AtssParams atss;
  AnchorConfig anchors;          // grid for the chosen assigner
  bool anchors_overridden = false;
  SceneParams scene;
  MockPredictorConfig predictor;
  MetricParams metrics;
  SeedParams seeds;
  double feedback_strength = 0.85;
};

/// Grid each assigner was designed around: dense 9-box grids for the IoU
/// thresholder, points for center sampling, one box per cell otherwise.
inline AnchorConfig natural_grid_for(const std::string& assigner) {
  if (assigner == "retinanet") return retinanet_a9_config();
  AnchorConfig cfg;
  if (assigner == "fcos") cfg.mode = AnchorMode::kPoints;
  return cfg;
}

namespace detail {

inline void require_keys_known(const nlohmann::json& obj, const std::string& path,
                               const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!known.count(key))
      throw ConfigError(path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <typename T>
T get_field(const nlohmann::json& obj, const std::string& path, const std::string& key,
            T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path.empty() ? key : path + "." + key, "wrong type");
  }
}

inline void parse_anchor_section(const nlohmann::json& j, const std::string& path,
                                 AnchorConfig& out) {
  require_keys_known(j, path, {"mode", "strides", "base_scale", "scales", "ratios"});
  const std::string mode = get_field<std::string>(j, path, "mode", "boxes");
  if (mode == "boxes") {
    out.mode = AnchorMode::kBoxes;
  } else if (mode == "points") {
    out.mode = AnchorMode::kPoints;
  } else {
    throw ConfigError(path + ".mode", "must be \"boxes\" or \"points\"");
  }
  out.strides = get_field<std::vector<double>>(j, path, "strides", out.strides);
  if (out.strides.empty()) throw ConfigError(path + ".strides", "must be nonempty");
  for (double s : out.strides)
    if (s < 1.0) throw ConfigError(path + ".strides", "entries must be >= 1");
  out.base_scale = get_field<double>(j, path, "base_scale", out.base_scale);
  if (!(out.base_scale > 0.0)) throw ConfigError(path + ".base_scale", "must be > 0");
  out.scales = get_field<std::vector<double>>(j, path, "scales", out.scales);
  out.ratios = get_field<std::vector<double>>(j, path, "ratios", out.ratios);
  for (double v : out.scales)
    if (!(v > 0.0)) throw ConfigError(path + ".scales", "entries must be > 0");
  for (double v : out.ratios)
    if (!(v > 0.0)) throw ConfigError(path + ".ratios", "entries must be > 0");
}

}  // namespace detail

/// Parses and validates the harness configuration. Unknown keys anywhere are
/// rejected so typos fail loudly instead of silently running defaults.
inline HarnessConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  detail::require_keys_known(j, "", {"assigner", "anchors", "scene", "predictor",
                                     "metrics", "seeds", "feedback_strength"});
  HarnessConfig cfg;

  if (!j.contains("assigner") || !j["assigner"].is_object())
    throw ConfigError("assigner", "required object");
  {
    const auto& a = j["assigner"];
    if (!a.contains("name")) throw ConfigError("assigner.name", "required");
    cfg.assigner = a["name"].get<std::string>();
    if (cfg.assigner == "lla") {
      detail::require_keys_known(a, "assigner",
                                 {"name", "k", "lambda", "inbox_penalty", "cls_loss",
                                  "reg_loss", "focal_alpha", "focal_gamma"});
      cfg.lla.k = detail::get_field<int>(a, "assigner", "k", cfg.lla.k);
      cfg.lla.lambda = detail::get_field<double>(a, "assigner", "lambda", cfg.lla.lambda);
      cfg.lla.inbox_penalty =
          detail::get_field<double>(a, "assigner", "inbox_penalty", cfg.lla.inbox_penalty);
      const std::string cls =
          detail::get_field<std::string>(a, "assigner", "cls_loss", "focal");
      if (cls == "focal") {
        cfg.lla.cls_loss = ClsLossKind::kFocal;
      } else if (cls == "bce") {
        cfg.lla.cls_loss = ClsLossKind::kBce;
      } else {
        throw ConfigError("assigner.cls_loss", "must be \"focal\" or \"bce\"");
      }
      const std::string reg =
          detail::get_field<std::string>(a, "assigner", "reg_loss", "iou");
      if (reg == "iou") {
        cfg.lla.reg_loss = RegLossKind::kIou;
      } else if (reg == "giou") {
        cfg.lla.reg_loss = RegLossKind::kGiou;
      } else if (reg == "log_iou") {
        cfg.lla.reg_loss = RegLossKind::kLogIou;
      } else {
        throw ConfigError("assigner.reg_loss", "must be \"iou\", \"giou\" or \"log_iou\"");
      }
      cfg.lla.focal.alpha =
          detail::get_field<double>(a, "assigner", "focal_alpha", cfg.lla.focal.alpha);
      cfg.lla.focal.gamma =
          detail::get_field<double>(a, "assigner", "focal_gamma", cfg.lla.focal.gamma);
      try {
        cfg.lla.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("assigner", e.what());
      }
    } else if (cfg.assigner == "retinanet") {
      detail::require_keys_known(a, "assigner", {"name", "pos_iou", "neg_iou"});
      cfg.retinanet.pos_iou =
          detail::get_field<double>(a, "assigner", "pos_iou", cfg.retinanet.pos_iou);
      cfg.retinanet.neg_iou =
          detail::get_field<double>(a, "assigner", "neg_iou", cfg.retinanet.neg_iou);
      if (!(0.0 <= cfg.retinanet.neg_iou && cfg.retinanet.neg_iou <= cfg.retinanet.pos_iou &&
            cfg.retinanet.pos_iou <= 1.0))
        throw ConfigError("assigner", "need 0 <= neg_iou <= pos_iou <= 1");
    } else if (cfg.assigner == "fcos") {
      detail::require_keys_known(a, "assigner", {"name", "radius"});
      cfg.fcos.radius = detail::get_field<double>(a, "assigner", "radius", cfg.fcos.radius);
      if (!(cfg.fcos.radius > 0.0)) throw ConfigError("assigner.radius", "must be > 0");
    } else if (cfg.assigner == "atss") {
      detail::require_keys_known(a, "assigner", {"name", "top_candidates"});
      cfg.atss.top_candidates =
          detail::get_field<int>(a, "assigner", "top_candidates", cfg.atss.top_candidates);
      if (cfg.atss.top_candidates < 1)
        throw ConfigError("assigner.top_candidates", "must be >= 1");
    } else {
      throw ConfigError("assigner.name",
                        "unknown assigner \"" + cfg.assigner +
                            "\" (expected lla, retinanet, fcos or atss)");
    }
  }

  cfg.anchors = natural_grid_for(cfg.assigner);
  if (j.contains("anchors")) {
    if (!j["anchors"].is_object()) throw ConfigError("anchors", "must be an object");
    detail::parse_anchor_section(j["anchors"], "anchors", cfg.anchors);
    cfg.anchors_overridden = true;
  }
  if (cfg.assigner == "fcos" && cfg.anchors.mode != AnchorMode::kPoints)
    throw ConfigError("anchors.mode", "fcos requires \"points\"");

  if (j.contains("scene")) {
    const auto& s = j["scene"];
    if (!s.is_object()) throw ConfigError("scene", "must be an object");
    detail::require_keys_known(
        s, "scene",
        {"image_w", "image_h", "n_people", "crowd_iou", "mean_height", "height_sigma",
         "aspect", "aspect_sigma", "max_retries", "max_occlusion"});
    auto& g = cfg.scene.geometry;
    g.image_w = detail::get_field<double>(s, "scene", "image_w", g.image_w);
    g.image_h = detail::get_field<double>(s, "scene", "image_h", g.image_h);
    if (!(g.image_w > 0.0) || !(g.image_h > 0.0))
      throw ConfigError("scene", "image dimensions must be > 0");
    cfg.scene.n_people = detail::get_field<int>(s, "scene", "n_people", cfg.scene.n_people);
    if (cfg.scene.n_people < 0) throw ConfigError("scene.n_people", "must be >= 0");
    cfg.scene.crowd_iou =
        detail::get_field<double>(s, "scene", "crowd_iou", cfg.scene.crowd_iou);
    if (!(cfg.scene.crowd_iou >= 0.0 && cfg.scene.crowd_iou < 1.0))
      throw ConfigError("scene.crowd_iou", "must be in [0,1)");
    g.mean_height = detail::get_field<double>(s, "scene", "mean_height", g.mean_height);
    if (!(g.mean_height > 0.0)) throw ConfigError("scene.mean_height", "must be > 0");
    g.height_sigma = detail::get_field<double>(s, "scene", "height_sigma", g.height_sigma);
    g.aspect = detail::get_field<double>(s, "scene", "aspect", g.aspect);
    g.aspect_sigma = detail::get_field<double>(s, "scene", "aspect_sigma", g.aspect_sigma);
    g.max_retries = detail::get_field<int>(s, "scene", "max_retries", g.max_retries);
    g.max_occlusion =
        detail::get_field<double>(s, "scene", "max_occlusion", g.max_occlusion);
    if (!(g.max_occlusion > 0.0 && g.max_occlusion <= 1.0))
      throw ConfigError("scene.max_occlusion", "must be in (0,1]");
  }

  if (j.contains("predictor")) {
    const auto& p = j["predictor"];
    if (!p.is_object()) throw ConfigError("predictor", "must be an object");
    detail::require_keys_known(p, "predictor",
                               {"score_sharpness", "noise_sigma", "maturity"});
    cfg.predictor.score_sharpness = detail::get_field<double>(
        p, "predictor", "score_sharpness", cfg.predictor.score_sharpness);
    cfg.predictor.noise_sigma =
        detail::get_field<double>(p, "predictor", "noise_sigma", cfg.predictor.noise_sigma);
    cfg.predictor.maturity =
        detail::get_field<double>(p, "predictor", "maturity", cfg.predictor.maturity);
    try {
      cfg.predictor.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("predictor", e.what());
    }
  }

  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    if (!m.is_object()) throw ConfigError("metrics", "must be an object");
    detail::require_keys_known(m, "metrics", {"nms_iou", "match_iou", "score_floor"});
    cfg.metrics.nms_iou = detail::get_field<double>(m, "metrics", "nms_iou", cfg.metrics.nms_iou);
    if (!(cfg.metrics.nms_iou > 0.0 && cfg.metrics.nms_iou < 1.0))
      throw ConfigError("metrics.nms_iou", "must be in (0,1)");
    cfg.metrics.match_iou =
        detail::get_field<double>(m, "metrics", "match_iou", cfg.metrics.match_iou);
    if (!(cfg.metrics.match_iou > 0.0 && cfg.metrics.match_iou <= 1.0))
      throw ConfigError("metrics.match_iou", "must be in (0,1]");
    cfg.metrics.score_floor =
        detail::get_field<double>(m, "metrics", "score_floor", cfg.metrics.score_floor);
    if (!(cfg.metrics.score_floor >= 0.0 && cfg.metrics.score_floor <= 1.0))
      throw ConfigError("metrics.score_floor", "must be in [0,1]");
  }

  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    if (!s.is_object()) throw ConfigError("seeds", "must be an object");
    detail::require_keys_known(s, "seeds", {"base", "count"});
    cfg.seeds.base = detail::get_field<std::uint64_t>(s, "seeds", "base", cfg.seeds.base);
    cfg.seeds.count = detail::get_field<int>(s, "seeds", "count", cfg.seeds.count);
    if (cfg.seeds.count < 1) throw ConfigError("seeds.count", "must be >= 1");
  }

  cfg.feedback_strength =
      detail::get_field<double>(j, "", "feedback_strength", cfg.feedback_strength);
  if (!(cfg.feedback_strength >= 0.0 && cfg.feedback_strength <= 1.0))
    throw ConfigError("feedback_strength", "must be in [0,1]");
  return cfg;
}

inline HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace crowdassign
