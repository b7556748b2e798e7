#include "run_dir.hpp"

#include <atomic>
#include <fstream>
#include <thread>

#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void write_atomic(const fs::path& path, const std::string& contents) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) + "-" +
         std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(Errc::io_error, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(Errc::io_error, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

DirectoryArtifactSink::DirectoryArtifactSink(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void DirectoryArtifactSink::record(const RenderedPrompt& prompt, const SamplingParams& params,
                                   std::size_t first_sample, const std::vector<Completion>& completions) {
  json p = {{"temperature", params.temperature}, {"n_samples", params.n_samples}, {"max_tokens", params.max_tokens}};
  if (params.seed) p["seed"] = *params.seed;
  json outs = json::array();
  for (const auto& c : completions)
    outs.push_back({{"text", c.text}, {"finish_reason", to_string(c.finish_reason)}, {"backend", c.backend_id}});
  json entry = {{"prompt", to_json(prompt)}, {"params", p}, {"first_sample", first_sample}, {"completions", outs}};
  const std::string name = prompt.fingerprint.substr(0, 16) + "-" + std::to_string(first_sample) + "-" +
                           std::to_string(completions.size()) + ".json";
  write_atomic(dir_ / name, entry.dump(2) + "\n");
}

RunDir::RunDir(fs::path root) : root_(std::move(root)) {
  fs::create_directories(reports());
  fs::create_directories(artifacts());
}

void RunDir::write_output(const std::string& relative, const std::string& contents) {
  write_atomic(root_ / relative, contents);
  outputs_[relative] = sha256_hex(contents);
}

void RunDir::register_output(const std::string& relative) {
  outputs_[relative] = sha256_hex(read_file((root_ / relative).string()));
}

}  // namespace nlidisc::cli
