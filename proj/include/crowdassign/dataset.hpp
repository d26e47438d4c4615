#pragma once

#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdassign/assign.hpp"
#include "crowdassign/geometry.hpp"
#include "crowdassign/metrics.hpp"
#include "crowdassign/scene.hpp"

namespace crowdassign {

struct GtBoxRecord {
  int cls = 0;
  Box full;
  std::optional<Box> visible;
  bool ignore = false;
};

struct DatasetRecord {
  std::string image_id;
  double image_w = 0.0;
  double image_h = 0.0;
  std::vector<GtBoxRecord> gtboxes;
};

namespace detail {

inline Box box_from_xywh(const nlohmann::json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != 4)
    throw std::runtime_error(where + ": expected [x,y,w,h]");
  const double x = arr[0].get<double>();
  const double y = arr[1].get<double>();
  const double w = arr[2].get<double>();
  const double h = arr[3].get<double>();
  if (w < 0.0 || h < 0.0) throw std::runtime_error(where + ": negative extent");
  return {x, y, x + w, y + h};
}

inline nlohmann::json xywh_from_box(const Box& b) {
  return nlohmann::json::array({b.x1, b.y1, b.width(), b.height()});
}

}  // namespace detail

/// Parses JSON-lines pedestrian annotations. Full-body boxes arrive as
/// [x,y,w,h] and leave in corner convention; a "person" tag is class 0 and
/// any other tag turns the record into an ignore region. Head boxes are
/// accepted and discarded.
inline std::vector<DatasetRecord> parse_odgt(std::istream& in) {
  std::vector<DatasetRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("odgt line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = "odgt line " + std::to_string(line_no);
    try {
      DatasetRecord rec;
      rec.image_id = j.value("ID", "line-" + std::to_string(line_no));
      rec.image_w = j.value("width", 0.0);
      rec.image_h = j.value("height", 0.0);
      for (const auto& gj : j.value("gtboxes", nlohmann::json::array())) {
        GtBoxRecord g;
        if (!gj.contains("fbox")) throw std::runtime_error(where + ": gtbox missing fbox");
        g.full = detail::box_from_xywh(gj["fbox"], where + " fbox");
        const std::string tag = gj.value("tag", "person");
        if (tag == "person") {
          g.cls = 0;
        } else {
          g.ignore = true;  // masks and other non-person tags become ignore regions
        }
        if (gj.contains("vbox"))
          g.visible = detail::box_from_xywh(gj["vbox"], where + " vbox");
        if (gj.contains("extra") && gj["extra"].is_object() &&
            gj["extra"].value("ignore", 0) == 1)
          g.ignore = true;
        // "hbox" (head) is valid input but intentionally unused.
        rec.gtboxes.push_back(g);
      }
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
  }
  return records;
}

inline std::vector<DatasetRecord> parse_odgt_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open odgt file: " + path);
  return parse_odgt(in);
}

/// Serializes records back to the JSON-lines layout parse_odgt reads, so the
/// two round-trip.
inline std::string write_odgt(const std::vector<DatasetRecord>& records) {
  std::ostringstream out;
  for (const DatasetRecord& rec : records) {
    nlohmann::json j;
    j["ID"] = rec.image_id;
    j["width"] = rec.image_w;
    j["height"] = rec.image_h;
    j["gtboxes"] = nlohmann::json::array();
    for (const GtBoxRecord& g : rec.gtboxes) {
      nlohmann::json gj;
      gj["tag"] = g.ignore && g.cls == 0 ? "mask" : "person";
      gj["fbox"] = detail::xywh_from_box(g.full);
      if (g.visible) gj["vbox"] = detail::xywh_from_box(*g.visible);
      if (g.ignore) gj["extra"] = {{"ignore", 1}};
      j["gtboxes"].push_back(gj);
    }
    out << j.dump() << "\n";
  }
  return out.str();
}

/// Parses a COCO-style annotation document: images[] give ids/sizes,
/// annotations[] carry bbox [x,y,w,h] with iscrowd mapping to ignore.
inline std::vector<DatasetRecord> parse_coco(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::runtime_error("coco: document must be an object");
  for (const char* key : {"images", "annotations"}) {
    if (!doc.contains(key))
      throw std::runtime_error(std::string("coco: missing required key \"") + key + "\"");
  }
  std::vector<DatasetRecord> records;
  std::vector<long long> ids;
  for (const auto& im : doc["images"]) {
    if (!im.contains("id")) throw std::runtime_error("coco: image missing \"id\"");
    DatasetRecord rec;
    rec.image_id = std::to_string(im["id"].get<long long>());
    rec.image_w = im.value("width", 0.0);
    rec.image_h = im.value("height", 0.0);
    ids.push_back(im["id"].get<long long>());
    records.push_back(std::move(rec));
  }
  for (const auto& an : doc["annotations"]) {
    for (const char* key : {"image_id", "bbox"}) {
      if (!an.contains(key))
        throw std::runtime_error(std::string("coco: annotation missing required key \"") +
                                 key + "\"");
    }
    const long long image_id = an["image_id"].get<long long>();
    std::size_t slot = records.size();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] == image_id) {
        slot = r;
        break;
      }
    }
    if (slot == records.size())
      throw std::runtime_error("coco: annotation references unknown image_id " +
                               std::to_string(image_id));
    GtBoxRecord g;
    g.full = detail::box_from_xywh(an["bbox"], "coco bbox");
    g.ignore = an.value("iscrowd", 0) == 1;
    records[slot].gtboxes.push_back(g);
  }
  return records;
}

/// Detection dump: [{"image_id":..., "bbox":[x,y,w,h], "score":...}, ...].
inline std::vector<std::vector<Detection>> parse_detections(
    const nlohmann::json& doc, const std::vector<DatasetRecord>& records) {
  if (!doc.is_array()) throw std::runtime_error("detections: document must be an array");
  std::vector<std::vector<Detection>> per_image(records.size());
  for (const auto& dj : doc) {
    for (const char* key : {"image_id", "bbox", "score"}) {
      if (!dj.contains(key))
        throw std::runtime_error(std::string("detections: entry missing \"") + key + "\"");
    }
    const std::string image_id = dj["image_id"].is_string()
                                     ? dj["image_id"].get<std::string>()
                                     : std::to_string(dj["image_id"].get<long long>());
    std::size_t slot = records.size();
    for (std::size_t r = 0; r < records.size(); ++r) {
      if (records[r].image_id == image_id) {
        slot = r;
        break;
      }
    }
    if (slot == records.size())
      throw std::runtime_error("detections: unknown image_id \"" + image_id + "\"");
    Detection d;
    d.box = detail::box_from_xywh(dj["bbox"], "detections bbox");
    d.score = dj["score"].get<double>();
    if (d.score < 0.0 || d.score > 1.0)
      throw std::runtime_error("detections: score outside [0,1]");
    d.image_id = static_cast<int>(slot);
    per_image[slot].push_back(d);
  }
  return per_image;
}

/// Lifts an annotation record into the Scene shape the assigners consume.
/// Without visible boxes, everything counts as fully visible; depth follows
/// box bottoms like the generator.
inline Scene record_to_scene(const DatasetRecord& rec) {
  Scene scene;
  scene.image_w = rec.image_w;
  scene.image_h = rec.image_h;
  for (const GtBoxRecord& g : rec.gtboxes) {
    scene.gts.push_back(g.full, g.cls, g.ignore);
    const Box vis = g.visible.value_or(g.full);
    scene.visible.push_back(vis);
    const double full_area = g.full.area();
    scene.occlusion.push_back(full_area > 0.0 ? 1.0 - vis.area() / full_area : 0.0);
  }
  const std::size_t n = scene.gts.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ya = scene.gts.boxes[static_cast<std::size_t>(a)].y2;
    const double yb = scene.gts.boxes[static_cast<std::size_t>(b)].y2;
    if (ya != yb) return ya > yb;
    return a < b;
  });
  scene.depth_rank.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r)
    scene.depth_rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r);
  return scene;
}

}  // namespace crowdassign
