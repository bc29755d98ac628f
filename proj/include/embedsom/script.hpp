#pragma once

#include "embedsom/engine.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Command scripts: JSON-lines, one object per line.
//   {"cmd":"Config", ...session settings...}        first line
//   {"tick":N,"cmd":"MoveLandmark","id":7,...}     drained before tick N+1 runs
//   {"cmd":"End","tick":T,"digest":"<hex>"}          optional trailer
// `tick` counts ticks completed before the command is drained.
namespace embedsom {

struct ScriptEntry {
    std::uint64_t tick = 0;
    Command command;
};

struct Script {
    SessionConfig config;
    std::vector<ScriptEntry> entries;
    std::optional<std::uint64_t> total_ticks;
    std::optional<std::string> digest;
};

std::string command_to_json(const Command &command);
Command command_from_json(std::string_view json_text);

std::string config_to_json(const SessionConfig &config);
SessionConfig config_from_json(std::string_view json_text);

Script parse_script(std::string_view text);
std::string write_script(const Script &script);
Script load_script(const std::filesystem::path &path);

/// Appends entries as they happen. Entries must arrive with non-decreasing ticks.
class ScriptRecorder {
public:
    explicit ScriptRecorder(const SessionConfig &config) { script_.config = config; }

    void record(std::uint64_t tick, Command command);
    void finish(std::uint64_t total_ticks, std::string digest);
    const Script &script() const noexcept { return script_; }

private:
    Script script_;
};

struct ReplayResult {
    std::uint64_t ticks = 0;
    std::string digest;
    std::vector<CommandError> errors;
};

/// Runs the script headlessly and digests every emitted FramePoints payload.
/// Runs `ticks` ticks (default: the recorded total, or one past the last entry).
ReplayResult replay(const Script &script, std::optional<std::uint64_t> ticks = std::nullopt);

}  // namespace embedsom
