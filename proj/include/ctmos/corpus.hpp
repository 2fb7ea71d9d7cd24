#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace ctmos {

inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kNumToken = "N";

/// PTB-style preprocessing: lower-case, whole-number tokens -> "N",
/// newline -> <eos>, punctuation removed (intra-word apostrophes and
/// hyphens survive). Special tokens pass through unchanged.
std::vector<std::string> preprocess(const std::string& raw);

/// Inverse of preprocess for already-clean streams: tokens separated by
/// spaces, <eos> rendered as a newline.
std::string join_tokens(const std::vector<std::string>& tokens);

struct Vocabulary {
  std::vector<std::string> tokens;  // rank order, most frequent first
  std::vector<long> counts;
  std::unordered_map<std::string, int> index;
  int unk_id = -1;
  int eos_id = -1;
  int num_id = -1;

  int size() const { return static_cast<int>(tokens.size()); }
  int encode(const std::string& tok) const;
  const std::string& decode(int id) const { return tokens.at(id); }
  std::vector<int> encode_stream(const std::vector<std::string>& toks) const;
  /// FNV-1a over the rank-ordered token list.
  std::uint64_t digest() const;

  void save(const std::string& path) const;  // "token<TAB>count" per rank
  static Vocabulary load(const std::string& path);
};

/// Frequency-capped vocabulary; ties at the cap broken lexicographically.
/// Special tokens are always retained.
Vocabulary build_vocabulary(const std::vector<std::string>& tokens, int cap);

struct CorpusBatch {
  int batch_size = 0;
  int bptt = 0;
  std::vector<int> inputs;     // [b * bptt + t]
  std::vector<int> targets;    // token following inputs[b][t] in the stream
  std::vector<int> positions;  // sentence position of inputs[b][t]

  int input(int b, int t) const { return inputs[b * bptt + t]; }
  int target(int b, int t) const { return targets[b * bptt + t]; }
  int position(int b, int t) const { return positions[b * bptt + t]; }
};

/// Column-wise split into batch_size contiguous segments; consecutive
/// batches continue hidden state; trailing remainder dropped.
std::vector<CorpusBatch> make_batches(const std::vector<int>& stream, int batch_size,
                                      int bptt, int eos_id);

void save_tokens(const std::string& path, const std::vector<std::string>& tokens);
std::vector<std::string> load_tokens(const std::string& path);

}  // namespace ctmos
