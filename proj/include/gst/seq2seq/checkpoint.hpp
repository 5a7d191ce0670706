#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gst/seq2seq/model.hpp"

namespace gst::seq2seq {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
};

/// Little-endian binary: header {magic, format_version, config hash, vocab
/// hash, seed, config, role}, then (name, shape, values) per parameter.
std::string serialize(const Checkpoint& ckpt, std::uint64_t vocab_hash);
Checkpoint deserialize(const std::string& bytes, std::uint64_t expected_vocab_hash);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// HashMismatchError when the vocabulary differs from the built-in one.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gst::seq2seq
