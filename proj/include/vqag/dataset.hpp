#pragma once

// In-memory annotation corpus: QA triplets plus per-image region descriptions
// and object instances, loaded from the three Visual Genome style JSON files.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqag/error.hpp"

namespace vqag {

using ImageId = std::int64_t;
using RegionId = std::int64_t;
using ObjectId = std::int64_t;
using QaId = std::int64_t;

// Inclusive pixel corners.
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  long long width() const { return static_cast<long long>(x_max) - x_min + 1; }
  long long height() const { return static_cast<long long>(y_max) - y_min + 1; }
  long long area() const { return width() * height(); }
  double center_x() const { return 0.5 * (static_cast<double>(x_min) + x_max); }
  double center_y() const { return 0.5 * (static_cast<double>(y_min) + y_max); }

  bool valid_in(int img_w, int img_h) const {
    return 0 <= x_min && x_min <= x_max && x_max < img_w && 0 <= y_min && y_min <= y_max && y_max < img_h;
  }

  bool operator==(const BoundingBox&) const = default;
};

inline long long intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const long long w = static_cast<long long>(std::min(a.x_max, b.x_max)) - std::max(a.x_min, b.x_min) + 1;
  const long long h = static_cast<long long>(std::min(a.y_max, b.y_max)) - std::max(a.y_min, b.y_min) + 1;
  return (w > 0 && h > 0) ? w * h : 0;
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const long long inter = intersection_area(a, b);
  const long long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

struct RegionAnnotation {
  RegionId region_id = 0;
  std::string phrase;
  BoundingBox box;

  bool operator==(const RegionAnnotation&) const = default;
};

struct ObjectAnnotation {
  ObjectId object_id = 0;
  std::vector<std::string> names;  // names.front() is canonical
  BoundingBox box;

  bool operator==(const ObjectAnnotation&) const = default;
};

struct QaTriplet {
  QaId qa_id = 0;
  ImageId image_id = 0;
  std::string question;
  std::string answer;
  int image_width = 0;
  int image_height = 0;

  bool operator==(const QaTriplet&) const = default;
};

struct Dataset {
  std::vector<QaTriplet> triplets;
  std::map<ImageId, std::vector<RegionAnnotation>> regions_by_image;
  std::map<ImageId, std::vector<ObjectAnnotation>> objects_by_image;

  const std::vector<RegionAnnotation>& regions(ImageId id) const {
    static const std::vector<RegionAnnotation> none;
    auto it = regions_by_image.find(id);
    return it == regions_by_image.end() ? none : it->second;
  }
  const std::vector<ObjectAnnotation>& objects(ImageId id) const {
    static const std::vector<ObjectAnnotation> none;
    auto it = objects_by_image.find(id);
    return it == objects_by_image.end() ? none : it->second;
  }

  bool operator==(const Dataset&) const = default;
};

struct DatasetLoadReport {
  std::size_t clamped_boxes = 0;
  std::size_t skipped_triplets = 0;
  std::size_t skipped_regions = 0;
  std::size_t skipped_objects = 0;
  std::vector<std::string> messages;
};

namespace detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path.string(), "malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline void require_array(const nlohmann::json& j, const std::filesystem::path& path) {
  if (!j.is_array()) throw LoadError(path.string(), "expected a top-level JSON array");
}

// Converts a corner+size box to inclusive corners and clamps it into the
// image. Returns true when anything had to be changed.
inline bool make_box(long long x, long long y, long long w, long long h, int img_w, int img_h, BoundingBox& out) {
  long long x0 = x;
  long long y0 = y;
  long long x1 = x + w - 1;
  long long y1 = y + h - 1;
  const long long x_limit = img_w > 0 ? img_w - 1 : std::max({x0, x1, 0LL});
  const long long y_limit = img_h > 0 ? img_h - 1 : std::max({y0, y1, 0LL});
  const auto clamp = [](long long v, long long hi) { return std::clamp(v, 0LL, hi); };
  const long long cx0 = clamp(x0, x_limit);
  const long long cy0 = clamp(y0, y_limit);
  const long long cx1 = std::max(cx0, clamp(x1, x_limit));
  const long long cy1 = std::max(cy0, clamp(y1, y_limit));
  out = {static_cast<int>(cx0), static_cast<int>(cy0), static_cast<int>(cx1), static_cast<int>(cy1)};
  return cx0 != x0 || cy0 != y0 || cx1 != x1 || cy1 != y1;
}

template <typename T>
T field(const nlohmann::json& rec, const char* name, const std::filesystem::path& path, std::size_t index) {
  auto it = rec.find(name);
  if (it == rec.end()) {
    throw LoadError(path.string(), "record " + std::to_string(index) + " is missing field '" + name + "'");
  }
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw LoadError(path.string(), "record " + std::to_string(index) + " has a bad '" + name + "' field");
  }
}

inline std::vector<QaTriplet> read_triplets(const nlohmann::json& qa_json, const std::filesystem::path& qa_file,
                                            const std::set<ImageId>* known_images, DatasetLoadReport& rep) {
  std::vector<QaTriplet> out;
  std::set<QaId> seen_qa;
  for (std::size_t i = 0; i < qa_json.size(); ++i) {
    const auto& rec = qa_json[i];
    QaTriplet t;
    t.image_id = field<ImageId>(rec, "image_id", qa_file, i);
    t.qa_id = field<QaId>(rec, "qa_id", qa_file, i);
    t.question = field<std::string>(rec, "question", qa_file, i);
    t.answer = field<std::string>(rec, "answer", qa_file, i);
    t.image_width = field<int>(rec, "image_width", qa_file, i);
    t.image_height = field<int>(rec, "image_height", qa_file, i);
    std::string reason;
    if (known_images && !known_images->contains(t.image_id)) {
      reason = "unknown image_id " + std::to_string(t.image_id);
    } else if (seen_qa.contains(t.qa_id)) {
      reason = "duplicate qa_id";
    } else if (t.question.empty() || t.answer.empty()) {
      reason = "empty question or answer";
    } else if (t.image_width <= 0 || t.image_height <= 0) {
      reason = "non-positive image dimensions";
    }
    if (!reason.empty()) {
      ++rep.skipped_triplets;
      rep.messages.push_back(qa_file.filename().string() + ": qa_id " + std::to_string(t.qa_id) + " skipped: " +
                             reason);
      continue;
    }
    seen_qa.insert(t.qa_id);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

// Reads only the QA file; image references are not checked.
inline std::vector<QaTriplet> load_triplets(const std::filesystem::path& qa_file,
                                            DatasetLoadReport* report = nullptr) {
  DatasetLoadReport local;
  const auto qa_json = detail::read_json_file(qa_file);
  detail::require_array(qa_json, qa_file);
  return detail::read_triplets(qa_json, qa_file, nullptr, report ? *report : local);
}

// Loads regions, objects and QA files. Boxes that leave their image are
// clamped; QA records naming an image absent from both annotation files are
// dropped. Both are counted in `report`.
inline Dataset load_dataset(const std::filesystem::path& regions_file, const std::filesystem::path& objects_file,
                            const std::filesystem::path& qa_file, DatasetLoadReport* report = nullptr) {
  DatasetLoadReport local;
  DatasetLoadReport& rep = report ? *report : local;
  using nlohmann::json;
  using detail::field;

  const json regions_json = detail::read_json_file(regions_file);
  const json objects_json = detail::read_json_file(objects_file);
  const json qa_json = detail::read_json_file(qa_file);
  detail::require_array(regions_json, regions_file);
  detail::require_array(objects_json, objects_file);
  detail::require_array(qa_json, qa_file);

  Dataset d;
  std::set<ImageId> known_images;
  for (std::size_t i = 0; i < regions_json.size(); ++i) {
    known_images.insert(field<ImageId>(regions_json[i], "image_id", regions_file, i));
  }
  for (std::size_t i = 0; i < objects_json.size(); ++i) {
    known_images.insert(field<ImageId>(objects_json[i], "image_id", objects_file, i));
  }

  std::map<ImageId, std::pair<int, int>> dims;
  d.triplets = detail::read_triplets(qa_json, qa_file, &known_images, rep);
  for (const auto& t : d.triplets) dims.try_emplace(t.image_id, t.image_width, t.image_height);

  const auto dims_of = [&](ImageId id) {
    auto it = dims.find(id);
    return it == dims.end() ? std::pair{0, 0} : it->second;
  };

  std::set<RegionId> seen_regions;
  for (std::size_t i = 0; i < regions_json.size(); ++i) {
    const auto& rec = regions_json[i];
    const auto image_id = field<ImageId>(rec, "image_id", regions_file, i);
    auto& list = d.regions_by_image[image_id];
    const auto [w, h] = dims_of(image_id);
    const auto regions = field<json>(rec, "regions", regions_file, i);
    for (std::size_t k = 0; k < regions.size(); ++k) {
      const auto& r = regions[k];
      RegionAnnotation ann;
      ann.region_id = field<RegionId>(r, "region_id", regions_file, i);
      ann.phrase = field<std::string>(r, "phrase", regions_file, i);
      if (ann.phrase.empty() || seen_regions.contains(ann.region_id)) {
        ++rep.skipped_regions;
        continue;
      }
      if (detail::make_box(field<long long>(r, "x", regions_file, i), field<long long>(r, "y", regions_file, i),
                           field<long long>(r, "width", regions_file, i),
                           field<long long>(r, "height", regions_file, i), w, h, ann.box)) {
        ++rep.clamped_boxes;
      }
      seen_regions.insert(ann.region_id);
      list.push_back(std::move(ann));
    }
  }

  std::set<ObjectId> seen_objects;
  for (std::size_t i = 0; i < objects_json.size(); ++i) {
    const auto& rec = objects_json[i];
    const auto image_id = field<ImageId>(rec, "image_id", objects_file, i);
    auto& list = d.objects_by_image[image_id];
    const auto [w, h] = dims_of(image_id);
    const auto objects = field<json>(rec, "objects", objects_file, i);
    for (std::size_t k = 0; k < objects.size(); ++k) {
      const auto& o = objects[k];
      ObjectAnnotation ann;
      ann.object_id = field<ObjectId>(o, "object_id", objects_file, i);
      ann.names = field<std::vector<std::string>>(o, "names", objects_file, i);
      std::erase_if(ann.names, [](const std::string& s) { return s.empty(); });
      if (ann.names.empty() || seen_objects.contains(ann.object_id)) {
        ++rep.skipped_objects;
        continue;
      }
      if (detail::make_box(field<long long>(o, "x", objects_file, i), field<long long>(o, "y", objects_file, i),
                           field<long long>(o, "w", objects_file, i), field<long long>(o, "h", objects_file, i), w,
                           h, ann.box)) {
        ++rep.clamped_boxes;
      }
      seen_objects.insert(ann.object_id);
      list.push_back(std::move(ann));
    }
  }

  for (const auto& t : d.triplets) {
    d.regions_by_image.try_emplace(t.image_id);
    d.objects_by_image.try_emplace(t.image_id);
  }
  return d;
}

// Lists every invariant violation; empty iff the dataset is well formed.
inline std::vector<std::string> validate(const Dataset& d) {
  std::vector<std::string> issues;
  std::set<QaId> qa_ids;
  std::map<ImageId, std::pair<int, int>> dims;
  for (const auto& t : d.triplets) {
    const auto id = std::to_string(t.qa_id);
    if (!qa_ids.insert(t.qa_id).second) issues.push_back("duplicate qa_id " + id);
    if (t.question.empty() || t.answer.empty()) issues.push_back("empty question/answer in qa_id " + id);
    if (t.image_width <= 0 || t.image_height <= 0) issues.push_back("non-positive dimensions in qa_id " + id);
    if (!d.regions_by_image.contains(t.image_id) || !d.objects_by_image.contains(t.image_id)) {
      issues.push_back("qa_id " + id + " references image " + std::to_string(t.image_id) +
                       " without annotation lists");
    }
    dims.try_emplace(t.image_id, t.image_width, t.image_height);
  }
  const auto check_box = [&](ImageId image, const BoundingBox& b, const std::string& what) {
    auto it = dims.find(image);
    const bool ok = it == dims.end() ? (0 <= b.x_min && b.x_min <= b.x_max && 0 <= b.y_min && b.y_min <= b.y_max)
                                     : b.valid_in(it->second.first, it->second.second);
    if (!ok) issues.push_back(what + " box out of bounds");
  };
  std::set<RegionId> region_ids;
  for (const auto& [image, regions] : d.regions_by_image) {
    for (const auto& r : regions) {
      const auto what = "region_id " + std::to_string(r.region_id);
      if (!region_ids.insert(r.region_id).second) issues.push_back("duplicate " + what);
      if (r.phrase.empty()) issues.push_back("empty phrase in " + what);
      check_box(image, r.box, what);
    }
  }
  std::set<ObjectId> object_ids;
  for (const auto& [image, objects] : d.objects_by_image) {
    for (const auto& o : objects) {
      const auto what = "object_id " + std::to_string(o.object_id);
      if (!object_ids.insert(o.object_id).second) issues.push_back("duplicate " + what);
      if (o.names.empty()) issues.push_back("empty names in " + what);
      check_box(image, o.box, what);
    }
  }
  return issues;
}

// Serializers back to the input schema; reloading their output yields an
// equal Dataset.
inline nlohmann::ordered_json regions_to_json(const Dataset& d) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [image, regions] : d.regions_by_image) {
    nlohmann::ordered_json rec;
    rec["image_id"] = image;
    rec["regions"] = nlohmann::ordered_json::array();
    for (const auto& r : regions) {
      rec["regions"].push_back({{"region_id", r.region_id},
                                {"phrase", r.phrase},
                                {"x", r.box.x_min},
                                {"y", r.box.y_min},
                                {"width", r.box.width()},
                                {"height", r.box.height()}});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline nlohmann::ordered_json objects_to_json(const Dataset& d) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [image, objects] : d.objects_by_image) {
    nlohmann::ordered_json rec;
    rec["image_id"] = image;
    rec["objects"] = nlohmann::ordered_json::array();
    for (const auto& o : objects) {
      rec["objects"].push_back({{"object_id", o.object_id},
                                {"names", o.names},
                                {"x", o.box.x_min},
                                {"y", o.box.y_min},
                                {"w", o.box.width()},
                                {"h", o.box.height()}});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline nlohmann::ordered_json qa_to_json(const Dataset& d) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& t : d.triplets) {
    out.push_back({{"image_id", t.image_id},
                   {"qa_id", t.qa_id},
                   {"question", t.question},
                   {"answer", t.answer},
                   {"image_width", t.image_width},
                   {"image_height", t.image_height}});
  }
  return out;
}

}  // namespace vqag
