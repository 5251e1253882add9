#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "hydrofix/json_io.hpp"
#include "hydrofix/polygonize.hpp"
#include "hydrofix/raster.hpp"

namespace hydrofix {

enum class VerdictKind { Accept, Reject };

const char* to_string(VerdictKind v);

struct Verdict {
  std::string candidate_id;
  VerdictKind verdict = VerdictKind::Reject;
  std::string reviewer;
  std::int64_t timestamp = 0;  ///< UTC seconds
};

Json verdict_to_json(const Verdict& v);
Verdict verdict_from_json(const Json& j);

/// Active verdict per candidate: latest timestamp wins, ties go to the entry
/// that comes later in the list.
std::map<std::string, Verdict> fold_verdicts(const std::vector<Verdict>& log);

/// Candidates with the folded verdicts applied (Accepted / Rejected).
/// Verdicts for unknown ids are skipped with a warning.
std::vector<Candidate> apply_verdicts(const std::vector<Candidate>& candidates,
                                      const std::map<std::string, Verdict>& active);

/// Append-only JSON-lines verdict log.
///
/// On open a trailing line without a newline that does not parse is
/// dropped (with a warning) and cut from the file; any other malformed line
/// is an IoError.
class VerdictLog {
 public:
  explicit VerdictLog(std::filesystem::path path);

  void append(const Verdict& v);
  std::vector<Verdict> entries() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<Verdict> entries_;
};

struct BootstrapExport {
  std::vector<Point2> negatives;
  std::vector<Correction> truths;
  std::vector<std::string> warnings;
};

inline constexpr double kNegativeDedupRadius = 10.0;

/// Negatives are `sampled` followed by centroids of rejected candidates,
/// dropping any point within dedup_m of one already kept. Accepted
/// candidates contribute their fitted horseshoes.
BootstrapExport export_bootstrap(const std::vector<Verdict>& log, const std::vector<Candidate>& candidates,
                                 const std::vector<Point2>& sampled, double dedup_m = kNegativeDedupRadius);

Json bootstrap_export_to_json(const BootstrapExport& e);

struct ReviewData {
  std::vector<Candidate> candidates;
  Grid prob;
  Grid dem;
  std::vector<Point2> sampled_negatives;  ///< bootstrap_sample output
};

struct ReviewOptions {
  int max_crop = 128;       ///< side limit of crop payloads
  int context_cells = 16;   ///< margin around the candidate polygon
  std::filesystem::path static_dir;  ///< optional UI bundle served at /
  std::function<std::int64_t()> clock;  ///< defaults to system time
};

/// Block-mean downsample of a crop so neither side exceeds max_side. Nodata
/// cells are left out of the means; all-nodata blocks stay nodata.
Grid shrink_for_payload(const Grid& g, int max_side);

/// HTTP review API over a candidate set. Candidates and rasters are never
/// modified; verdicts go to the log.
class ReviewService {
 public:
  ReviewService(ReviewData data, VerdictLog& log, ReviewOptions options = {});
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  /// Throws IoError when the port is unavailable.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();

  // Handlers, also used directly by tests.
  Json candidates(const std::string& status) const;
  std::optional<Json> candidate(const std::string& id) const;
  /// 204 on success, 404 unknown id, 400 bad body.
  int post_verdict(const std::string& id, const std::string& body);
  Json stats() const;
  Json export_payload() const;

 private:
  struct Server;
  ReviewData data_;
  VerdictLog& log_;
  ReviewOptions options_;
  std::map<std::string, std::size_t> index_;
  std::unique_ptr<Server> server_;
};

}  // namespace hydrofix
