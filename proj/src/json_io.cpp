#include "hydrofix/json_io.hpp"

#include <fstream>
#include <sstream>

#include "hydrofix/error.hpp"

namespace hydrofix {

namespace {

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw IoError(std::string("missing field \"") + key + "\"");
  return j.at(key);
}

}  // namespace

Json point_to_json(const Point2& p) { return Json::array({p.x(), p.y()}); }

Point2 point_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw IoError("a point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Json points_to_json(const std::vector<Point2>& pts) {
  Json a = Json::array();
  for (const auto& p : pts) a.push_back(point_to_json(p));
  return a;
}

std::vector<Point2> points_from_json(const Json& j) {
  if (!j.is_array()) throw IoError("expected a point list");
  std::vector<Point2> out;
  for (const auto& p : j) out.push_back(point_from_json(p));
  return out;
}

Json polylines_to_json(const std::vector<Polyline>& lines) {
  Json arr = Json::array();
  for (const auto& l : lines) arr.push_back({{"points", points_to_json(l)}});
  return {{"lines", arr}};
}

std::vector<Polyline> polylines_from_json(const Json& j) {
  std::vector<Polyline> out;
  for (const auto& l : field(j, "lines")) out.push_back(points_from_json(field(l, "points")));
  return out;
}

Json correction_to_json(const Correction& c) {
  Json j{{"id", c.id}, {"kind", to_string(c.kind)}, {"p0", point_to_json(c.p0)}, {"p1", point_to_json(c.p1)}};
  if (c.kind == CorrectionKind::HorseShoe) j["width"] = c.width;
  return j;
}

Correction correction_from_json(const Json& j) {
  Correction c;
  c.id = field(j, "id").get<std::string>();
  const auto kind = field(j, "kind").get<std::string>();
  if (kind == "line") {
    c.kind = CorrectionKind::Line;
  } else if (kind == "horseshoe") {
    c.kind = CorrectionKind::HorseShoe;
    c.width = field(j, "width").get<double>();
  } else {
    throw IoError("unknown correction kind: " + kind);
  }
  c.p0 = point_from_json(field(j, "p0"));
  c.p1 = point_from_json(field(j, "p1"));
  c.validate();
  return c;
}

Json candidate_to_json(const Candidate& c) {
  Json j{{"id", c.id},
         {"polygon", points_to_json(c.polygon)},
         {"area_m2", c.area_m2},
         {"elev_var", c.elev_var},
         {"median_p", c.median_p},
         {"horseshoe", nullptr},
         {"status", to_string(c.status)}};
  if (c.horseshoe) {
    j["horseshoe"] = {{"p0", point_to_json(c.horseshoe->p0)},
                      {"p1", point_to_json(c.horseshoe->p1)},
                      {"width", c.horseshoe->width}};
  }
  if (!c.reason.empty()) j["reason"] = c.reason;
  return j;
}

Candidate candidate_from_json(const Json& j) {
  Candidate c;
  c.id = field(j, "id").get<std::string>();
  c.polygon = points_from_json(field(j, "polygon"));
  c.area_m2 = field(j, "area_m2").get<double>();
  c.elev_var = field(j, "elev_var").get<double>();
  c.median_p = field(j, "median_p").get<double>();
  const Json& h = field(j, "horseshoe");
  if (!h.is_null())
    c.horseshoe = Correction::horseshoe(c.id, point_from_json(field(h, "p0")), point_from_json(field(h, "p1")),
                                        field(h, "width").get<double>());
  c.status = candidate_status_from_string(field(j, "status").get<std::string>());
  if (j.contains("reason")) c.reason = j.at("reason").get<std::string>();
  return c;
}

Json eval_report_to_json(const EvalReport& r) {
  Json curve = Json::array();
  for (const auto& p : r.curve) curve.push_back({{"t", p.threshold}, {"precision", p.precision}, {"recall", p.recall}});
  Json j{{"max_recall", r.max_recall}, {"mP", r.mP}, {"curve", curve},
         {"tp", r.tp},                 {"fp", r.fp}, {"fn", r.fn}};
  if (r.auc) j["auc"] = *r.auc;
  return j;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Json> rows;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::vector<Json>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Correction> read_corrections(const std::filesystem::path& path) {
  std::vector<Correction> out;
  for (const auto& j : read_jsonl(path)) out.push_back(correction_from_json(j));
  return out;
}

void write_corrections(const std::vector<Correction>& cs, const std::filesystem::path& path) {
  std::vector<Json> rows;
  for (const auto& c : cs) rows.push_back(correction_to_json(c));
  write_jsonl(rows, path);
}

std::vector<Candidate> read_candidates(const std::filesystem::path& path) {
  std::vector<Candidate> out;
  for (const auto& j : read_jsonl(path)) out.push_back(candidate_from_json(j));
  return out;
}

void write_candidates(const std::vector<Candidate>& cs, const std::filesystem::path& path) {
  std::vector<Json> rows;
  for (const auto& c : cs) rows.push_back(candidate_to_json(c));
  write_jsonl(rows, path);
}

std::vector<Polyline> read_polylines(const std::filesystem::path& path) { return polylines_from_json(read_json(path)); }

void write_polylines(const std::vector<Polyline>& lines, const std::filesystem::path& path) {
  write_json(polylines_to_json(lines), path);
}

}  // namespace hydrofix
