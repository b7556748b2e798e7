#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "nlidisc/gateway.hpp"

namespace nlidisc::cli {

/// Raw artifact log: one file per gateway exchange,
/// artifacts/<fingerprint[0:16]>-<first sample>-<n>.json. Latency is left out
/// so the log is as reproducible as the reports.
class DirectoryArtifactSink final : public ArtifactSink {
 public:
  explicit DirectoryArtifactSink(std::filesystem::path dir);
  void record(const RenderedPrompt& prompt, const SamplingParams& params, std::size_t first_sample,
              const std::vector<Completion>& completions) override;

 private:
  std::filesystem::path dir_;
};

/// Output directory of one run:
///   reports/      <name>.json and <name>.txt
///   artifacts/    raw prompt/completion log
///   cache/        completion cache (unless run.cache_dir points elsewhere)
///   manifest.json everything replay needs; no timestamps
class RunDir {
 public:
  explicit RunDir(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path reports() const { return root_ / "reports"; }
  std::filesystem::path artifacts() const { return root_ / "artifacts"; }
  std::filesystem::path cache() const { return root_ / "cache"; }
  std::filesystem::path manifest() const { return root_ / "manifest.json"; }

  /// Writes `contents` to root/relative and remembers its digest for the
  /// manifest's "outputs" map.
  void write_output(const std::string& relative, const std::string& contents);
  /// Registers a file some other writer already produced under root.
  void register_output(const std::string& relative);
  const std::map<std::string, std::string>& outputs() const noexcept { return outputs_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::string> outputs_;
};

/// Atomic write via a sibling temp file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace nlidisc::cli
