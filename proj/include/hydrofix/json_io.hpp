#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hydrofix/correction.hpp"
#include "hydrofix/evaluate.hpp"
#include "hydrofix/polygonize.hpp"

namespace hydrofix {

using Json = nlohmann::json;

Json point_to_json(const Point2& p);
Point2 point_from_json(const Json& j);
Json points_to_json(const std::vector<Point2>& pts);
std::vector<Point2> points_from_json(const Json& j);

/// {"lines":[{"points":[[x,y],...]}, ...]}
Json polylines_to_json(const std::vector<Polyline>& lines);
std::vector<Polyline> polylines_from_json(const Json& j);

/// {"id","kind":"line"|"horseshoe","p0":[x,y],"p1":[x,y],"width"} (width only for horseshoes)
Json correction_to_json(const Correction& c);
Correction correction_from_json(const Json& j);

/// {"id","polygon","area_m2","elev_var","median_p","horseshoe":{...}|null,"status","reason"?}
Json candidate_to_json(const Candidate& c);
Candidate candidate_from_json(const Json& j);

Json eval_report_to_json(const EvalReport& r);

// Files. JSONL readers report the offending line number.
Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::vector<Json>& rows, const std::filesystem::path& path);

std::vector<Correction> read_corrections(const std::filesystem::path& path);
void write_corrections(const std::vector<Correction>& cs, const std::filesystem::path& path);
std::vector<Candidate> read_candidates(const std::filesystem::path& path);
void write_candidates(const std::vector<Candidate>& cs, const std::filesystem::path& path);
std::vector<Polyline> read_polylines(const std::filesystem::path& path);
void write_polylines(const std::vector<Polyline>& lines, const std::filesystem::path& path);

}  // namespace hydrofix
