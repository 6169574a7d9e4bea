#pragma once

#include "lexprompt/joint_space.h"
#include "lexprompt/prompt_model.h"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lexprompt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary record: magic, version, kind, vocab hash, integer dims, named
// row-major double arrays, trailing FNV-1a checksum of everything before it.
struct Checkpoint {
  std::string kind;
  std::uint64_t vocab_hash = 0;
  std::map<std::string, std::int64_t> dims;
  std::vector<std::pair<std::string, Mat>> arrays;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Throws DataError on a missing file, bad magic, version mismatch, or a
// checksum failure (which covers truncation).
Checkpoint load_checkpoint(const std::filesystem::path& path);
// As above, and also throws DataError when the vocab hash differs.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash);

Checkpoint capture(std::string kind, std::uint64_t vocab_hash, std::map<std::string, std::int64_t> dims,
                   const ParamList& params);
// Copies arrays into params by name. Throws DataError on a missing name or a
// shape mismatch.
void apply_checkpoint(const Checkpoint& checkpoint, const ParamList& params);

Checkpoint to_checkpoint(PromptModel& model, std::uint64_t vocab_hash);
PromptModel prompt_model_from(const Checkpoint& checkpoint);

Checkpoint to_checkpoint(SentenceEncoder& encoder, std::uint64_t vocab_hash);
SentenceEncoder retriever_from(const Checkpoint& checkpoint);

}  // namespace lexprompt
