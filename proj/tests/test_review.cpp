#include <doctest.h>

#include <fstream>
#include <thread>

#include "hydrofix/error.hpp"
#include "hydrofix/review.hpp"
#include "test_util.hpp"

// After Eigen: resolv.h defines a _res macro.
#include <httplib.h>

using namespace hydrofix;

namespace {

Candidate cand(std::string id, Point2 center, double median, CandidateStatus st = CandidateStatus::Proposed) {
  Candidate c;
  c.id = std::move(id);
  c.polygon = {center + Point2(-2, -1), center + Point2(2, -1), center + Point2(2, 1), center + Point2(-2, 1)};
  c.median_p = median;
  c.area_m2 = 8;
  c.status = st;
  if (st == CandidateStatus::Filtered) c.reason = "flat";
  c.horseshoe = Correction::horseshoe(c.id, center - Point2(3, 0), center + Point2(3, 0), 2.0);
  return c;
}

Verdict verdict(std::string id, VerdictKind k, std::string who, std::int64_t t) {
  return {std::move(id), k, std::move(who), t};
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

ReviewData scene() {
  ReviewData d;
  d.dem = Grid(300, 200, 0.8, Point2(1000, 2000));
  d.prob = Grid(300, 200, 0.8, Point2(1000, 2000));
  for (Eigen::Index r = 0; r < 300; ++r)
    for (Eigen::Index c = 0; c < 200; ++c) {
      d.dem(r, c) = static_cast<float>(r + 0.01 * c);
      d.prob(r, c) = static_cast<float>(c) / 200.0f;
    }
  d.candidates = {cand("c0", Point2(1040, 2040), 0.9), cand("c1", Point2(1080, 2100), 0.52),
                  cand("c2", Point2(1100, 2150), 0.44), cand("c3", Point2(1120, 2200), 0.3, CandidateStatus::Filtered)};
  d.candidates[1].horseshoe.reset();
  d.sampled_negatives = {Point2(1100, 2150)};
  return d;
}

}  // namespace

TEST_CASE("fold verdicts: latest timestamp wins, ties go to the later entry") {
  const std::vector<Verdict> log{verdict("a", VerdictKind::Accept, "x", 10), verdict("a", VerdictKind::Reject, "y", 5),
                                 verdict("b", VerdictKind::Reject, "x", 7), verdict("b", VerdictKind::Accept, "y", 7)};
  const auto f = fold_verdicts(log);
  CHECK(f.at("a").verdict == VerdictKind::Accept);
  CHECK(f.at("b").verdict == VerdictKind::Accept);
  CHECK(f.at("b").reviewer == "y");

  const auto applied = apply_verdicts({cand("a", Point2(0, 0), 0.5), cand("z", Point2(50, 0), 0.5)}, f);
  CHECK(applied[0].status == CandidateStatus::Accepted);
  CHECK(applied[1].status == CandidateStatus::Proposed);

  const Verdict v = verdict_from_json(verdict_to_json(log[0]));
  CHECK(v.candidate_id == "a");
  CHECK(v.timestamp == 10);
  CHECK(verdict_to_json(log[1])["verdict"] == "reject");
  CHECK_THROWS_AS(verdict_from_json(Json{{"candidate_id", "a"}, {"verdict", "maybe"}, {"reviewer", "r"}, {"timestamp", 1}}),
                  IoError);
}

TEST_CASE("verdict log persistence and recovery") {
  test::TempDir dir;
  const auto path = dir.path / "verdicts.jsonl";
  {
    VerdictLog log(path);
    CHECK(std::filesystem::exists(path));
    CHECK(log.entries().empty());
    log.append(verdict("a", VerdictKind::Accept, "r", 1));
    log.append(verdict("b", VerdictKind::Reject, "r", 2));
  }
  {
    VerdictLog log(path);
    REQUIRE(log.entries().size() == 2);
    CHECK(log.entries()[1].candidate_id == "b");
  }
  SUBCASE("partial trailing line is dropped and cut") {
    const std::string good = test::file_text(path);
    write_text(path, good + "{\"candidate_id\":\"c\",\"verd");
    VerdictLog log(path);
    CHECK(log.entries().size() == 2);
    CHECK(test::file_text(path) == good);
    log.append(verdict("c", VerdictKind::Accept, "r", 3));
    CHECK(VerdictLog(path).entries().size() == 3);
  }
  SUBCASE("complete trailing line without newline is kept") {
    const std::string good = test::file_text(path);
    write_text(path, good + verdict_to_json(verdict("c", VerdictKind::Accept, "r", 3)).dump());
    VerdictLog log(path);
    CHECK(log.entries().size() == 3);
    log.append(verdict("d", VerdictKind::Accept, "r", 4));
    CHECK(VerdictLog(path).entries().size() == 4);
  }
  SUBCASE("corrupt middle line is an error") {
    const std::string good = test::file_text(path);
    write_text(path, "garbage\n" + good);
    CHECK_THROWS_AS(VerdictLog{path}, IoError);
  }
}

TEST_CASE("export bootstrap") {
  const std::vector<Candidate> cs{cand("a", Point2(0, 0), 0.44), cand("b", Point2(100, 0), 0.7),
                                  cand("c", Point2(200, 0), 0.6)};
  const std::vector<Point2> sampled{Point2(0, 0), Point2(500, 0)};
  SUBCASE("empty log gives the sampled negatives") {
    const BootstrapExport e = export_bootstrap({}, cs, sampled);
    CHECK(e.negatives == sampled);
    CHECK(e.truths.empty());
  }
  SUBCASE("accepted candidates add their horseshoe") {
    const BootstrapExport e = export_bootstrap({verdict("b", VerdictKind::Accept, "r", 1)}, cs, sampled);
    REQUIRE(e.truths.size() == 1);
    CHECK(e.truths[0].p0 == cs[1].horseshoe->p0);
    CHECK(e.negatives.size() == 2);
  }
  SUBCASE("reject then accept counts as accepted") {
    const BootstrapExport e = export_bootstrap(
        {verdict("c", VerdictKind::Reject, "r", 1), verdict("c", VerdictKind::Accept, "s", 2)}, cs, sampled);
    CHECK(e.truths.size() == 1);
    CHECK(e.negatives.size() == 2);
  }
  SUBCASE("rejections merge with sampled negatives, deduplicated within 10 m") {
    const BootstrapExport e = export_bootstrap(
        {verdict("a", VerdictKind::Reject, "r", 1), verdict("c", VerdictKind::Reject, "r", 1)}, cs, sampled);
    REQUIRE(e.negatives.size() == 3);
    CHECK((e.negatives[2] - Point2(200, 0)).norm() < 1e-9);
    CHECK(e.truths.empty());
  }
  SUBCASE("unknown ids and missing horseshoes warn") {
    auto no_fit = cs;
    no_fit[1].horseshoe.reset();
    const BootstrapExport e = export_bootstrap(
        {verdict("zz", VerdictKind::Reject, "r", 1), verdict("b", VerdictKind::Accept, "r", 1)}, no_fit, {});
    CHECK(e.truths.empty());
    CHECK(e.negatives.empty());
    CHECK(e.warnings.size() == 2);
  }
  const Json j = bootstrap_export_to_json(export_bootstrap({verdict("b", VerdictKind::Accept, "r", 1)}, cs, sampled));
  CHECK(j["negatives"].size() == 2);
  CHECK(j["truths"].size() == 1);
}

TEST_CASE("payload shrinking uses nodata-aware block means") {
  Grid g(300, 130, 1.0, Point2(5, 5));
  for (Eigen::Index r = 0; r < 300; ++r)
    for (Eigen::Index c = 0; c < 130; ++c) g(r, c) = static_cast<float>(r * 1000 + c);
  g(0, 0) = g.nodata;
  const Grid s = shrink_for_payload(g, 128);
  CHECK(s.height() <= 128);
  CHECK(s.width() <= 128);
  CHECK(s.cell_size == 3.0);
  CHECK(s.height() == 100);
  CHECK(s.width() == 44);
  // Block (0,0) without the nodata cell.
  double sum = 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (r || c) sum += r * 1000 + c;
  CHECK(s(0, 0) == doctest::Approx(sum / 8));
  // Last partial column block has 1 column.
  CHECK(s(1, 43) == doctest::Approx((3 * 1000 + 4 * 1000 + 5 * 1000) / 3.0 + 129));
  Grid all_nd(4, 4, 1.0, Point2::Zero(), 0.0f, 0.0f);
  const Grid t = shrink_for_payload(all_nd, 2);
  CHECK(t.is_nodata(0, 0));
  CHECK(shrink_for_payload(g, 400).values == g.values);
}

TEST_CASE("review handlers") {
  test::TempDir dir;
  VerdictLog log(dir.path / "verdicts.jsonl");
  std::int64_t now = 1000;
  ReviewOptions opt;
  opt.clock = [&] { return now; };
  ReviewService svc(scene(), log, opt);

  const Json pending = svc.candidates("pending");
  REQUIRE(pending.size() == 3);
  CHECK(pending[0]["id"] == "c1");  // |0.52 - 0.5|
  CHECK(pending[1]["id"] == "c2");
  CHECK(pending[2]["id"] == "c0");
  CHECK(svc.candidates("all").size() == 4);
  CHECK_THROWS_AS(svc.candidates("bogus"), InvalidArgument);

  CHECK(svc.post_verdict("c0", R"({"verdict":"accept","reviewer":"ann"})") == 204);
  CHECK(svc.post_verdict("nope", R"({"verdict":"accept","reviewer":"ann"})") == 404);
  CHECK(svc.post_verdict("c0", R"({"verdict":"maybe","reviewer":"ann"})") == 400);
  CHECK(svc.post_verdict("c0", R"({"verdict":"accept"})") == 400);
  CHECK(svc.post_verdict("c0", "not json") == 400);
  CHECK((*svc.candidate("c0"))["status"] == "accepted");
  CHECK(svc.candidates("accepted").size() == 1);
  CHECK(svc.candidates("pending").size() == 2);

  now = 1000 + 1800;
  CHECK(svc.post_verdict("c0", R"({"verdict":"reject","reviewer":"ann"})") == 204);
  now = 1000 + 3600;
  CHECK(svc.post_verdict("c2", R"({"verdict":"reject","reviewer":"bob"})") == 204);
  CHECK((*svc.candidate("c0"))["status"] == "rejected");

  const Json st = svc.stats();
  CHECK(st["counts"]["pending"] == 1);
  CHECK(st["counts"]["rejected"] == 2);
  CHECK(st["counts"]["accepted"] == 0);
  CHECK(st["counts"]["filtered"] == 1);
  CHECK(st["counts"]["total"] == 4);
  CHECK(st["log_entries"] == 3);
  CHECK(st["overridden"] == 1);
  CHECK(st["reviewers"]["ann"]["verdicts"] == 2);
  CHECK(st["reviewers"]["ann"]["per_hour"].get<double>() == doctest::Approx(2.0));
  CHECK(st["reviewers"]["bob"]["per_hour"].is_null());

  const Json ex = svc.export_payload();
  // Sampled negative at c2's centroid; c0 rejected adds a second one.
  CHECK(ex["negatives"].size() == 2);
  CHECK(ex["truths"].empty());
  CHECK(!svc.candidate("nope").has_value());
}

TEST_CASE("candidate payload geometry") {
  test::TempDir dir;
  VerdictLog log(dir.path / "v.jsonl");
  ReviewData d = scene();
  // A large candidate forces downsampling.
  Candidate big = cand("big", Point2(1080, 2120), 0.6);
  big.polygon = {Point2(1010, 2010), Point2(1150, 2010), Point2(1150, 2220), Point2(1010, 2220)};
  d.candidates.push_back(big);
  ReviewService svc(d, log);
  for (const std::string id : {"c0", "big"}) {
    CAPTURE(id);
    const Json j = *svc.candidate(id);
    const auto& dem = j["dem"];
    CHECK(dem.size() <= 128);
    CHECK(dem[0].size() <= 128);
    CHECK(j["prob"].size() == dem.size());
    const Point2 origin(j["world_origin"][0].get<double>(), j["world_origin"][1].get<double>());
    const double cs = j["cell_size"].get<double>();
    for (std::size_t k = 0; k < j["polygon"].size(); ++k) {
      const Point2 local(j["polygon"][k][0].get<double>(), j["polygon"][k][1].get<double>());
      const Point2 world(j["polygon_world"][k][0].get<double>(), j["polygon_world"][k][1].get<double>());
      CHECK((origin + local * cs - world).norm() < 1e-9);
      CHECK(local.x() >= 0);
      CHECK(local.y() >= 0);
      CHECK(local.x() <= static_cast<double>(dem[0].size()));
      CHECK(local.y() <= static_cast<double>(dem.size()));
    }
  }
  const Json c0 = *svc.candidate("c0");
  CHECK(c0["cell_size"] == 0.8);
  CHECK(c0["horseshoe"]["width"].get<double>() == doctest::Approx(2.0 / 0.8));
  CHECK((*svc.candidate("big"))["cell_size"].get<double>() > 0.8);
}

TEST_CASE("http api") {
  test::TempDir dir;
  VerdictLog log(dir.path / "verdicts.jsonl");
  ReviewService svc(scene(), log);
  const int port = svc.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread th([&] { svc.run(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);

  auto res = cli.Get("/api/candidates?status=pending");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body).size() == 3);
  res = cli.Get("/api/candidates?status=weird");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = cli.Post("/api/candidates/c2/verdict", R"({"verdict":"accept","reviewer":"ann"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 204);
  res = cli.Get("/api/candidates/c2");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body)["status"] == "accepted");
  res = cli.Post("/api/candidates/zz/verdict", R"({"verdict":"accept","reviewer":"ann"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
  res = cli.Post("/api/candidates/c2/verdict", R"({"verdict":1})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = cli.Get("/api/candidates/zz");
  REQUIRE(res);
  CHECK(res->status == 404);
  res = cli.Get("/api/stats");
  REQUIRE(res);
  CHECK(Json::parse(res->body)["counts"]["accepted"] == 1);
  res = cli.Get("/api/export/bootstrap");
  REQUIRE(res);
  CHECK(Json::parse(res->body)["truths"].size() == 1);

  // The verdict reached the durable log.
  CHECK(VerdictLog(dir.path / "verdicts.jsonl").entries().size() == 1);

  ReviewService other(scene(), log);
  CHECK_THROWS_AS(other.bind("127.0.0.1", port), IoError);

  svc.stop();
  th.join();
}
