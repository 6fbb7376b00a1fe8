#include "ctxlstm/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <iterator>

#include "ctxlstm/errors.hpp"

namespace ctxlstm {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)),
      argv_(std::move(argv)),
      started_(std::chrono::system_clock::now()),
      clock_(std::chrono::steady_clock::now()) {}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs_.emplace_back(path.string(), file_digest(path));
}

void RunManifest::add_output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }

nlohmann::json RunManifest::to_json() const {
  const std::time_t t = std::chrono::system_clock::to_time_t(started_);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& [path, digest] : inputs_) {
    inputs.push_back({{"path", path}, {"fnv1a64", digest}});
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_).count();
  return {{"command", command_}, {"argv", argv_},      {"config", config_},
          {"seed", seed_},       {"inputs", inputs},   {"outputs", outputs_},
          {"started_at", stamp}, {"wall_seconds", seconds}};
}

void RunManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace ctxlstm
