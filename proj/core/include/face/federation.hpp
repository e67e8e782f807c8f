#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "face/pipeline.hpp"
#include "face/serialization.hpp"
#include "face/site_data.hpp"

namespace face {

inline constexpr const char* kProtocolVersion = "face/1";

enum class Phase { kTargetBroadcast, kTargetSummary, kSourceSummary };

std::string ToString(Phase phase);
Phase ParsePhase(const std::string& text);

/// One message of the protocol. The checksum is the SHA-256 hex digest of
/// the canonical payload bytes (sorted keys, shortest round-trip floats).
struct Envelope {
  std::string protocol_version = kProtocolVersion;
  std::string sender_site;
  Phase phase = Phase::kTargetSummary;
  Json payload;
  std::string checksum;
};

std::string Sha256Hex(const std::string& bytes);
std::string CanonicalBytes(const Json& j);

Envelope Seal(std::string sender_site, Phase phase, Json payload);
Json ToJson(const Envelope& e);

/// Parses and verifies an envelope: version, checksum and that the payload
/// has the shape its phase announces. Throws ParseError on any mismatch.
Envelope OpenEnvelope(const Json& j);

TargetReport TargetFromEnvelope(const Envelope& e);
SourceReport SourceFromEnvelope(const Envelope& e);
Broadcast BroadcastFromEnvelope(const Envelope& e);

/// Where envelopes go between phases.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void PublishBroadcast(const Envelope& e) = 0;
  virtual Envelope ReadBroadcast() = 0;
  virtual void PublishSummary(const Envelope& e) = 0;
  /// All summaries currently published, ordered by sender.
  virtual std::vector<Envelope> ReadSummaries() = 0;
};

/// run_dir/broadcast.json and run_dir/site_<id>.summary.json, each written
/// to a temporary file and renamed into place.
class DirectoryTransport final : public Transport {
 public:
  explicit DirectoryTransport(std::filesystem::path run_dir);
  void PublishBroadcast(const Envelope& e) override;
  Envelope ReadBroadcast() override;
  void PublishSummary(const Envelope& e) override;
  std::vector<Envelope> ReadSummaries() override;

  const std::filesystem::path& run_dir() const { return run_dir_; }

 private:
  std::filesystem::path run_dir_;
};

class MemoryTransport final : public Transport {
 public:
  void PublishBroadcast(const Envelope& e) override;
  Envelope ReadBroadcast() override;
  void PublishSummary(const Envelope& e) override;
  std::vector<Envelope> ReadSummaries() override;

 private:
  std::optional<Envelope> broadcast_;
  std::map<std::string, Envelope> summaries_;
};

/// Forwards to another transport and counts what passes through.
class CountingTransport final : public Transport {
 public:
  explicit CountingTransport(Transport& inner) : inner_(inner) {}
  void PublishBroadcast(const Envelope& e) override;
  Envelope ReadBroadcast() override;
  void PublishSummary(const Envelope& e) override;
  std::vector<Envelope> ReadSummaries() override;

  int broadcasts() const { return broadcasts_; }
  const std::map<std::string, int>& emissions() const { return emissions_; }
  int broadcast_reads() const { return broadcast_reads_; }

 private:
  Transport& inner_;
  int broadcasts_ = 0;
  int broadcast_reads_ = 0;
  std::map<std::string, int> emissions_;
};

/// A site directory holds data.csv and site.json {"site_id", "role"}.
SiteData LoadSiteDir(const std::filesystem::path& dir);
void WriteSiteDir(const std::filesystem::path& dir, const SiteData& data);

/// Writes one summary per target site, then the N_T-weighted broadcast.
/// Throws ValidationError on duplicate ids or a non-target site.
Broadcast RunTargetPhase(const std::vector<SiteData>& targets,
                         const SiteOptions& options, Transport& transport);
void RunSourcePhase(const std::vector<SiteData>& sources,
                    const SiteOptions& options, Transport& transport);
FaceRun RunLeadingPhase(Transport& transport, const LeadingOptions& options);

/// Loads every site directory and runs the three phases through `transport`.
FaceRun RunFederated(const std::vector<std::filesystem::path>& site_dirs,
                     const SiteOptions& site_options,
                     const LeadingOptions& leading_options,
                     Transport& transport);

/// Atomic write of text to path via a sibling temporary file.
void WriteFileAtomic(const std::filesystem::path& path, const std::string& text);
std::string ReadFile(const std::filesystem::path& path);

/// Canonical bytes of a result, as written to result.json.
std::string ResultBytes(const FaceRun& run);

}  // namespace face
