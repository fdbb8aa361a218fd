// Binary checkpoints of replica summaries for resumable runs.
#ifndef POLYMERLAB_CHECKPOINT_HPP
#define POLYMERLAB_CHECKPOINT_HPP

#include "polymerlab/estimators.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace polymer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// One or more summaries plus a free-form tag (the CLI stores its config hash).
struct Checkpoint {
    std::string tag;
    std::vector<ReplicaSummary> sections;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;

std::string encode_checkpoint(const Checkpoint& c, std::uint32_t version = kCheckpointVersion);
/// Throws CheckpointError on bad magic, version mismatch, truncation or a
/// checksum mismatch.
Checkpoint decode_checkpoint(std::string_view bytes);

/// Writes through a temporary file and a rename.
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace polymer

#endif
