#include "hydrofix/review.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "byte_io.hpp"
#include "hydrofix/error.hpp"

namespace hydrofix {

const char* to_string(VerdictKind v) { return v == VerdictKind::Accept ? "accept" : "reject"; }

Json verdict_to_json(const Verdict& v) {
  return {{"candidate_id", v.candidate_id}, {"verdict", to_string(v.verdict)}, {"reviewer", v.reviewer},
          {"timestamp", v.timestamp}};
}

Verdict verdict_from_json(const Json& j) {
  if (!j.is_object()) throw IoError("verdict must be an object");
  Verdict v;
  try {
    v.candidate_id = j.at("candidate_id").get<std::string>();
    const auto kind = j.at("verdict").get<std::string>();
    if (kind == "accept") {
      v.verdict = VerdictKind::Accept;
    } else if (kind == "reject") {
      v.verdict = VerdictKind::Reject;
    } else {
      throw IoError("unknown verdict: " + kind);
    }
    v.reviewer = j.at("reviewer").get<std::string>();
    v.timestamp = j.at("timestamp").get<std::int64_t>();
  } catch (const Json::exception& e) {
    throw IoError(std::string("bad verdict record: ") + e.what());
  }
  return v;
}

std::map<std::string, Verdict> fold_verdicts(const std::vector<Verdict>& log) {
  std::map<std::string, Verdict> active;
  for (const auto& v : log) {
    auto it = active.find(v.candidate_id);
    if (it == active.end() || v.timestamp >= it->second.timestamp) active[v.candidate_id] = v;
  }
  return active;
}

std::vector<Candidate> apply_verdicts(const std::vector<Candidate>& candidates,
                                      const std::map<std::string, Verdict>& active) {
  std::vector<Candidate> out = candidates;
  std::set<std::string> known;
  for (auto& c : out) {
    known.insert(c.id);
    auto it = active.find(c.id);
    if (it == active.end()) continue;
    c.status = it->second.verdict == VerdictKind::Accept ? CandidateStatus::Accepted : CandidateStatus::Rejected;
  }
  for (const auto& [id, v] : active)
    if (!known.count(id)) std::cerr << "warning: verdict for unknown candidate " << id << " skipped\n";
  return out;
}

// ---------------------------------------------------------------------------

VerdictLog::VerdictLog(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) {
    std::ofstream create(path_, std::ios::binary);
    if (!create) throw IoError("cannot create verdict log " + path_.string());
    return;
  }
  const auto bytes = detail::read_file_bytes(path_);
  const std::string text(bytes.begin(), bytes.end());
  std::size_t pos = 0, line_no = 1;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      try {
        entries_.push_back(verdict_from_json(Json::parse(line)));
      } catch (const std::exception& e) {
        if (complete) throw IoError(path_.string() + ":" + std::to_string(line_no) + ": corrupt verdict log: " + e.what());
        std::cerr << "warning: dropping partial trailing line " << line_no << " of " << path_.string() << "\n";
        std::filesystem::resize_file(path_, pos);
        return;
      }
    }
    if (!complete) {
      std::ofstream fix(path_, std::ios::binary | std::ios::app);
      fix << '\n';
      return;
    }
    pos = nl + 1;
    ++line_no;
  }
}

void VerdictLog::append(const Verdict& v) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  out << verdict_to_json(v).dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to verdict log " + path_.string());
  entries_.push_back(v);
}

std::vector<Verdict> VerdictLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

// ---------------------------------------------------------------------------

BootstrapExport export_bootstrap(const std::vector<Verdict>& log, const std::vector<Candidate>& candidates,
                                 const std::vector<Point2>& sampled, double dedup_m) {
  BootstrapExport out;
  auto add_negative = [&](const Point2& p) {
    for (const auto& q : out.negatives)
      if ((p - q).norm() <= dedup_m) return;
    out.negatives.push_back(p);
  };
  for (const auto& p : sampled) add_negative(p);

  const auto active = fold_verdicts(log);
  std::map<std::string, const Candidate*> by_id;
  for (const auto& c : candidates) by_id[c.id] = &c;
  for (const auto& [id, v] : active) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      out.warnings.push_back("verdict for unknown candidate " + id + " skipped");
      continue;
    }
    const Candidate& c = *it->second;
    if (v.verdict == VerdictKind::Reject) continue;
    if (!c.horseshoe) {
      out.warnings.push_back("accepted candidate " + id + " has no horseshoe fit, skipped");
      continue;
    }
    out.truths.push_back(*c.horseshoe);
  }
  // Rejected centroids in candidate order.
  for (const auto& c : candidates) {
    auto it = active.find(c.id);
    if (it != active.end() && it->second.verdict == VerdictKind::Reject) add_negative(c.centroid());
  }
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
  return out;
}

Json bootstrap_export_to_json(const BootstrapExport& e) {
  Json truths = Json::array();
  for (const auto& c : e.truths) truths.push_back(correction_to_json(c));
  return {{"negatives", points_to_json(e.negatives)}, {"truths", truths}, {"warnings", e.warnings}};
}

// ---------------------------------------------------------------------------

Grid shrink_for_payload(const Grid& g, int max_side) {
  if (max_side < 1) throw InvalidArgument("max_side must be positive");
  const Eigen::Index longest = std::max(g.height(), g.width());
  const Eigen::Index f = (longest + max_side - 1) / max_side;
  if (f <= 1) return g;
  const Eigen::Index h = (g.height() + f - 1) / f, w = (g.width() + f - 1) / f;
  Grid out(h, w, g.cell_size * static_cast<double>(f), g.origin, g.nodata, g.nodata);
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      double sum = 0.0;
      int n = 0;
      for (Eigen::Index rr = r * f; rr < std::min(g.height(), (r + 1) * f); ++rr)
        for (Eigen::Index cc = c * f; cc < std::min(g.width(), (c + 1) * f); ++cc)
          if (!g.is_nodata(rr, cc)) {
            sum += g(rr, cc);
            ++n;
          }
      if (n > 0) out(r, c) = static_cast<float>(sum / n);
    }
  return out;
}

namespace {

Json grid_rows(const Grid& g) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < g.height(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < g.width(); ++c) {
      if (g.is_nodata(r, c)) {
        row.push_back(nullptr);
      } else {
        row.push_back(g(r, c));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

const char* status_name(const Candidate& c) { return to_string(c.status); }

std::int64_t system_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace

struct ReviewService::Server {
  httplib::Server http;
};

ReviewService::ReviewService(ReviewData data, VerdictLog& log, ReviewOptions options)
    : data_(std::move(data)), log_(log), options_(std::move(options)), server_(std::make_unique<Server>()) {
  if (!same_georeference(data_.prob, data_.dem)) throw ShapeMismatchError("review: prob and dem are not aligned");
  if (!options_.clock) options_.clock = system_seconds;
  for (std::size_t i = 0; i < data_.candidates.size(); ++i) {
    if (!index_.emplace(data_.candidates[i].id, i).second)
      throw InvalidArgument("duplicate candidate id " + data_.candidates[i].id);
  }

  auto& http = server_->http;
  http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  auto send_json = [](httplib::Response& res, const Json& j) { res.set_content(j.dump(), "application/json"); };
  http.Get("/api/candidates", [this, send_json](const httplib::Request& req, httplib::Response& res) {
    const std::string status = req.has_param("status") ? req.get_param_value("status") : "pending";
    try {
      send_json(res, candidates(status));
    } catch (const InvalidArgument& e) {
      res.status = 400;
      send_json(res, {{"error", e.what()}});
    }
  });
  http.Get("/api/candidates/:id", [this, send_json](const httplib::Request& req, httplib::Response& res) {
    auto j = candidate(req.path_params.at("id"));
    if (!j) {
      res.status = 404;
      send_json(res, {{"error", "unknown candidate"}});
      return;
    }
    send_json(res, *j);
  });
  http.Post("/api/candidates/:id/verdict", [this, send_json](const httplib::Request& req, httplib::Response& res) {
    res.status = post_verdict(req.path_params.at("id"), req.body);
    if (res.status == 404) send_json(res, {{"error", "unknown candidate"}});
    if (res.status == 400) send_json(res, {{"error", "body must be {\"verdict\":\"accept\"|\"reject\",\"reviewer\":str}"}});
  });
  http.Get("/api/stats", [this, send_json](const httplib::Request&, httplib::Response& res) { send_json(res, stats()); });
  http.Get("/api/export/bootstrap",
           [this, send_json](const httplib::Request&, httplib::Response& res) { send_json(res, export_payload()); });
  if (!options_.static_dir.empty() && !http.set_mount_point("/", options_.static_dir.string()))
    throw IoError("static directory not found: " + options_.static_dir.string());
}

ReviewService::~ReviewService() { stop(); }

int ReviewService::bind(const std::string& host, int port) {
  auto& http = server_->http;
  if (port == 0) {
    const int bound = http.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!http.bind_to_port(host, port)) throw IoError("port in use or unavailable: " + host + ":" + std::to_string(port));
  return port;
}

void ReviewService::run() { server_->http.listen_after_bind(); }

void ReviewService::stop() {
  if (server_ && server_->http.is_running()) server_->http.stop();
}

Json ReviewService::candidates(const std::string& status) const {
  static const std::set<std::string> allowed{"pending", "accepted", "rejected", "all"};
  if (!allowed.count(status)) throw InvalidArgument("status must be pending, accepted, rejected or all");
  const auto current = apply_verdicts(data_.candidates, fold_verdicts(log_.entries()));
  std::vector<const Candidate*> picked;
  for (const auto& c : current) {
    const bool keep = status == "all" || (status == "pending" && c.status == CandidateStatus::Proposed) ||
                      (status == "accepted" && c.status == CandidateStatus::Accepted) ||
                      (status == "rejected" && c.status == CandidateStatus::Rejected);
    if (keep) picked.push_back(&c);
  }
  if (status == "pending")
    std::stable_sort(picked.begin(), picked.end(), [](const Candidate* a, const Candidate* b) {
      return std::abs(a->median_p - 0.5) < std::abs(b->median_p - 0.5);
    });
  Json out = Json::array();
  for (const Candidate* c : picked)
    out.push_back({{"id", c->id},
                   {"centroid", point_to_json(c->centroid())},
                   {"area_m2", c->area_m2},
                   {"median_p", c->median_p},
                   {"status", status_name(*c)}});
  return out;
}

std::optional<Json> ReviewService::candidate(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  Candidate c = data_.candidates[it->second];
  const auto active = fold_verdicts(log_.entries());
  if (auto v = active.find(id); v != active.end())
    c.status = v->second.verdict == VerdictKind::Accept ? CandidateStatus::Accepted : CandidateStatus::Rejected;

  const Grid& dem = data_.dem;
  Point2 lo = c.polygon.front(), hi = c.polygon.front();
  for (const auto& p : c.polygon) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Point2 a = dem.world_to_cell(lo), b = dem.world_to_cell(hi);
  const Eigen::Index m = options_.context_cells;
  const Eigen::Index r0 = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(a.y())) - m, 0, dem.height() - 1);
  const Eigen::Index c0 = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(a.x())) - m, 0, dem.width() - 1);
  const Eigen::Index r1 = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(b.y())) + m, 0, dem.height() - 1);
  const Eigen::Index c1 = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(b.x())) + m, 0, dem.width() - 1);
  const Grid dem_crop = shrink_for_payload(crop(dem, r0, c0, r1 - r0 + 1, c1 - c0 + 1), options_.max_crop);
  const Grid prob_crop = shrink_for_payload(crop(data_.prob, r0, c0, r1 - r0 + 1, c1 - c0 + 1), options_.max_crop);

  auto local = [&](const Point2& p) -> Point2 { return (p - dem_crop.origin) / dem_crop.cell_size; };
  std::vector<Point2> poly;
  for (const auto& p : c.polygon) poly.push_back(local(p));
  Json j = candidate_to_json(c);
  j["dem"] = grid_rows(dem_crop);
  j["prob"] = grid_rows(prob_crop);
  j["polygon_world"] = j["polygon"];
  j["polygon"] = points_to_json(poly);
  if (c.horseshoe) {
    j["horseshoe"] = {{"p0", point_to_json(local(c.horseshoe->p0))},
                      {"p1", point_to_json(local(c.horseshoe->p1))},
                      {"width", c.horseshoe->width / dem_crop.cell_size}};
  }
  j["world_origin"] = point_to_json(dem_crop.origin);
  j["cell_size"] = dem_crop.cell_size;
  return j;
}

int ReviewService::post_verdict(const std::string& id, const std::string& body) {
  if (!index_.count(id)) return 404;
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::exception&) {
    return 400;
  }
  if (!j.is_object() || !j.contains("verdict") || !j.contains("reviewer") || !j["verdict"].is_string() ||
      !j["reviewer"].is_string())
    return 400;
  const auto kind = j["verdict"].get<std::string>();
  if (kind != "accept" && kind != "reject") return 400;
  Verdict v{id, kind == "accept" ? VerdictKind::Accept : VerdictKind::Reject, j["reviewer"].get<std::string>(),
            options_.clock()};
  log_.append(v);
  return 204;
}

Json ReviewService::stats() const {
  const auto entries = log_.entries();
  const auto current = apply_verdicts(data_.candidates, fold_verdicts(entries));
  std::map<std::string, std::size_t> counts{{"pending", 0}, {"accepted", 0}, {"rejected", 0}, {"filtered", 0}};
  for (const auto& c : current) {
    switch (c.status) {
      case CandidateStatus::Proposed: ++counts["pending"]; break;
      case CandidateStatus::Accepted: ++counts["accepted"]; break;
      case CandidateStatus::Rejected: ++counts["rejected"]; break;
      case CandidateStatus::Filtered: ++counts["filtered"]; break;
    }
  }
  struct Throughput {
    std::size_t n = 0;
    std::int64_t first = 0, last = 0;
  };
  std::map<std::string, Throughput> reviewers;
  std::map<std::string, std::size_t> per_candidate;
  for (const auto& v : entries) {
    auto& t = reviewers[v.reviewer];
    t.first = t.n == 0 ? v.timestamp : std::min(t.first, v.timestamp);
    t.last = t.n == 0 ? v.timestamp : std::max(t.last, v.timestamp);
    ++t.n;
    ++per_candidate[v.candidate_id];
  }
  Json rv = Json::object();
  for (const auto& [name, t] : reviewers) {
    Json r{{"verdicts", t.n}, {"first", t.first}, {"last", t.last}};
    r["per_hour"] = t.last > t.first ? Json(3600.0 * static_cast<double>(t.n - 1) / static_cast<double>(t.last - t.first))
                                     : Json(nullptr);
    rv[name] = r;
  }
  std::size_t overridden = 0;
  for (const auto& [id, n] : per_candidate)
    if (n > 1) ++overridden;
  Json c = counts;
  c["total"] = current.size();
  return {{"counts", c}, {"reviewers", rv}, {"log_entries", entries.size()}, {"overridden", overridden}};
}

Json ReviewService::export_payload() const {
  return bootstrap_export_to_json(export_bootstrap(log_.entries(), data_.candidates, data_.sampled_negatives));
}

}  // namespace hydrofix
