#include "face/federation.hpp"

#include <algorithm>
#include <cctype>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "face/error.hpp"

namespace face {
namespace fs = std::filesystem;

std::string ToString(Phase phase) {
  switch (phase) {
    case Phase::kTargetBroadcast:
      return "target_broadcast";
    case Phase::kTargetSummary:
      return "target_summary";
    case Phase::kSourceSummary:
      return "source_summary";
  }
  return "unknown";
}

Phase ParsePhase(const std::string& text) {
  if (text == "target_broadcast") return Phase::kTargetBroadcast;
  if (text == "target_summary") return Phase::kTargetSummary;
  if (text == "source_summary") return Phase::kSourceSummary;
  throw ParseError("unknown phase '" + text + "'");
}

std::string Sha256Hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string CanonicalBytes(const Json& j) { return j.dump(); }

Envelope Seal(std::string sender_site, Phase phase, Json payload) {
  Envelope e;
  e.sender_site = std::move(sender_site);
  e.phase = phase;
  e.payload = std::move(payload);
  e.checksum = Sha256Hex(CanonicalBytes(e.payload));
  return e;
}

Json ToJson(const Envelope& e) {
  Json j;
  j["protocol_version"] = e.protocol_version;
  j["sender_site"] = e.sender_site;
  j["phase"] = ToString(e.phase);
  j["payload"] = e.payload;
  j["checksum"] = e.checksum;
  return j;
}

Envelope OpenEnvelope(const Json& j) {
  if (!j.is_object()) throw ParseError("envelope is not a JSON object");
  for (const char* key :
       {"protocol_version", "sender_site", "phase", "payload", "checksum"}) {
    if (!j.contains(key)) throw ParseError(std::string("envelope lacks '") + key + "'");
  }
  Envelope e;
  e.protocol_version = j.at("protocol_version").get<std::string>();
  if (e.protocol_version != kProtocolVersion) {
    throw ParseError("protocol version '" + e.protocol_version +
                     "' does not match '" + kProtocolVersion + "'");
  }
  e.sender_site = j.at("sender_site").get<std::string>();
  e.phase = ParsePhase(j.at("phase").get<std::string>());
  e.payload = j.at("payload");
  e.checksum = j.at("checksum").get<std::string>();
  if (Sha256Hex(CanonicalBytes(e.payload)) != e.checksum) {
    throw ParseError("checksum mismatch in envelope from '" + e.sender_site + "'");
  }
  // Parsing the payload checks that it matches the announced phase.
  switch (e.phase) {
    case Phase::kTargetBroadcast:
      BroadcastFromJson(e.payload);
      break;
    case Phase::kTargetSummary:
      TargetReportFromJson(e.payload);
      if (e.payload.contains("d_hat")) throw ParseError("phase/payload mismatch");
      break;
    case Phase::kSourceSummary:
      SourceReportFromJson(e.payload);
      if (e.payload.contains("psi_bar")) throw ParseError("phase/payload mismatch");
      break;
  }
  if (e.phase != Phase::kTargetBroadcast &&
      e.payload.at("site_id").get<std::string>() != e.sender_site) {
    throw ParseError("sender '" + e.sender_site + "' does not match payload site_id");
  }
  return e;
}

TargetReport TargetFromEnvelope(const Envelope& e) {
  if (e.phase != Phase::kTargetSummary) throw ParseError("not a target summary");
  return TargetReportFromJson(e.payload);
}

SourceReport SourceFromEnvelope(const Envelope& e) {
  if (e.phase != Phase::kSourceSummary) throw ParseError("not a source summary");
  return SourceReportFromJson(e.payload);
}

Broadcast BroadcastFromEnvelope(const Envelope& e) {
  if (e.phase != Phase::kTargetBroadcast) throw ParseError("not a broadcast");
  return BroadcastFromJson(e.payload);
}

void WriteFileAtomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out.flush()) throw ValidationError("cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

Envelope ReadEnvelope(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(ReadFile(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    return OpenEnvelope(j);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string EnvelopeBytes(const Envelope& e) { return ToJson(e).dump(2) + "\n"; }

void CheckSiteId(const std::string& id) {
  const bool ok = !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
           c == '.';
  });
  if (!ok || id == "." || id == "..") {
    throw ValidationError("site_id '" + id + "' must use [A-Za-z0-9_.-]");
  }
}

constexpr const char* kSummaryPrefix = "site_";
constexpr const char* kSummarySuffix = ".summary.json";

}  // namespace

DirectoryTransport::DirectoryTransport(fs::path run_dir)
    : run_dir_(std::move(run_dir)) {
  fs::create_directories(run_dir_);
}

void DirectoryTransport::PublishBroadcast(const Envelope& e) {
  WriteFileAtomic(run_dir_ / "broadcast.json", EnvelopeBytes(e));
}

Envelope DirectoryTransport::ReadBroadcast() {
  const fs::path path = run_dir_ / "broadcast.json";
  if (!fs::exists(path)) throw ValidationError("no broadcast in '" + run_dir_.string() + "'");
  return ReadEnvelope(path);
}

void DirectoryTransport::PublishSummary(const Envelope& e) {
  CheckSiteId(e.sender_site);
  WriteFileAtomic(run_dir_ / (kSummaryPrefix + e.sender_site + kSummarySuffix),
                  EnvelopeBytes(e));
}

std::vector<Envelope> DirectoryTransport::ReadSummaries() {
  std::vector<fs::path> files;
  if (fs::is_directory(run_dir_)) {
    for (const auto& entry : fs::directory_iterator(run_dir_)) {
      const std::string name = entry.path().filename().string();
      if (name.starts_with(kSummaryPrefix) && name.ends_with(kSummarySuffix)) {
        files.push_back(entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Envelope> out;
  for (const auto& f : files) out.push_back(ReadEnvelope(f));
  return out;
}

void MemoryTransport::PublishBroadcast(const Envelope& e) { broadcast_ = e; }

Envelope MemoryTransport::ReadBroadcast() {
  if (!broadcast_) throw ValidationError("no broadcast published");
  return OpenEnvelope(ToJson(*broadcast_));
}

void MemoryTransport::PublishSummary(const Envelope& e) {
  summaries_[e.sender_site] = e;
}

std::vector<Envelope> MemoryTransport::ReadSummaries() {
  std::vector<Envelope> out;
  for (const auto& [id, e] : summaries_) out.push_back(OpenEnvelope(ToJson(e)));
  return out;
}

void CountingTransport::PublishBroadcast(const Envelope& e) {
  ++broadcasts_;
  inner_.PublishBroadcast(e);
}

Envelope CountingTransport::ReadBroadcast() {
  ++broadcast_reads_;
  return inner_.ReadBroadcast();
}

void CountingTransport::PublishSummary(const Envelope& e) {
  ++emissions_[e.sender_site];
  inner_.PublishSummary(e);
}

std::vector<Envelope> CountingTransport::ReadSummaries() {
  return inner_.ReadSummaries();
}

SiteData LoadSiteDir(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ValidationError("site directory '" + dir.string() + "' does not exist");
  }
  Json meta;
  try {
    meta = Json::parse(ReadFile(dir / "site.json"));
  } catch (const Json::parse_error& e) {
    throw ParseError((dir / "site.json").string() + ": " + e.what());
  }
  if (!meta.contains("site_id") || !meta.contains("role")) {
    throw ParseError((dir / "site.json").string() + ": needs site_id and role");
  }
  const std::string id = meta.at("site_id").get<std::string>();
  CheckSiteId(id);
  return LoadSiteCsv(dir / "data.csv", ParseSiteRole(meta.at("role").get<std::string>()),
                     id);
}

void WriteSiteDir(const fs::path& dir, const SiteData& data) {
  fs::create_directories(dir);
  WriteSiteCsv(dir / "data.csv", data);
  Json meta{{"site_id", data.site_id()}, {"role", ToString(data.role())}};
  WriteFileAtomic(dir / "site.json", meta.dump(2) + "\n");
}

Broadcast RunTargetPhase(const std::vector<SiteData>& targets,
                         const SiteOptions& options, Transport& transport) {
  std::set<std::string> ids;
  std::vector<TargetReport> reports;
  for (const auto& site : targets) {
    if (site.role() != SiteRole::kTarget) {
      throw ValidationError("site '" + site.site_id() + "' is not a target site");
    }
    if (!ids.insert(site.site_id()).second) {
      throw ValidationError("duplicate site_id '" + site.site_id() + "'");
    }
    reports.push_back(RunTargetSite(site, options));
  }
  const Broadcast broadcast = MakeBroadcast(reports);
  for (const auto& r : reports) {
    transport.PublishSummary(Seal(r.full.site_id, Phase::kTargetSummary, ToJson(r)));
  }
  transport.PublishBroadcast(Seal("targets", Phase::kTargetBroadcast, ToJson(broadcast)));
  return broadcast;
}

void RunSourcePhase(const std::vector<SiteData>& sources,
                    const SiteOptions& options, Transport& transport) {
  if (sources.empty()) return;
  const Broadcast broadcast = BroadcastFromEnvelope(transport.ReadBroadcast());
  std::set<std::string> ids;
  for (const auto& site : sources) {
    if (site.role() != SiteRole::kSource) {
      throw ValidationError("site '" + site.site_id() + "' is not a source site");
    }
    if (!ids.insert(site.site_id()).second) {
      throw ValidationError("duplicate site_id '" + site.site_id() + "'");
    }
    const SourceReport r = RunSourceSite(site, broadcast, options);
    transport.PublishSummary(Seal(r.full.site_id, Phase::kSourceSummary, ToJson(r)));
  }
}

FaceRun RunLeadingPhase(Transport& transport, const LeadingOptions& options) {
  std::vector<TargetReport> targets;
  std::vector<SourceReport> sources;
  for (const auto& e : transport.ReadSummaries()) {
    if (e.phase == Phase::kTargetSummary) {
      targets.push_back(TargetFromEnvelope(e));
    } else if (e.phase == Phase::kSourceSummary) {
      sources.push_back(SourceFromEnvelope(e));
    }
  }
  if (targets.empty()) throw ValidationError("no target summaries found");
  return RunLeading(std::move(targets), std::move(sources), options);
}

FaceRun RunFederated(const std::vector<fs::path>& site_dirs,
                     const SiteOptions& site_options,
                     const LeadingOptions& leading_options,
                     Transport& transport) {
  std::vector<SiteData> targets, sources;
  std::set<std::string> ids;
  for (const auto& dir : site_dirs) {
    SiteData site = LoadSiteDir(dir);
    if (!ids.insert(site.site_id()).second) {
      throw ValidationError("duplicate site_id '" + site.site_id() + "'");
    }
    (site.role() == SiteRole::kTarget ? targets : sources).push_back(std::move(site));
  }
  RunTargetPhase(targets, site_options, transport);
  RunSourcePhase(sources, site_options, transport);
  return RunLeadingPhase(transport, leading_options);
}

std::string ResultBytes(const FaceRun& run) { return ToJson(run).dump(2) + "\n"; }

}  // namespace face
