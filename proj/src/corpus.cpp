#include "ctmos/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ctmos/errors.hpp"
#include "ctmos/rng.hpp"

namespace ctmos {

namespace {

bool is_special(const std::string& tok) {
  return tok == kUnkToken || tok == kEosToken || tok == kNumToken;
}

// ASCII punctuation minus apostrophe and hyphen, which survive so that
// tokens like "'s" and "single-a-1" stay intact.
bool strip_char(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) && c != '\'' && c != '-';
}

// One whitespace-delimited raw token -> zero or one output tokens.
bool clean_token(const std::string& raw, std::string& out) {
  if (is_special(raw)) {
    out = raw;
    return true;
  }
  std::string t;
  t.reserve(raw.size());
  for (char c : raw) {
    if (strip_char(c)) continue;
    t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (t.empty()) return false;
  if (std::all_of(t.begin(), t.end(),
                  [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    out = kNumToken;
    return true;
  }
  out = std::move(t);
  return true;
}

}  // namespace

std::vector<std::string> preprocess(const std::string& raw) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < raw.size()) {
    std::size_t nl = raw.find('\n', start);
    const std::string line =
        raw.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    std::istringstream ss(line);
    std::string tok, cleaned;
    while (ss >> tok)
      if (clean_token(tok, cleaned)) out.push_back(cleaned);
    out.push_back(kEosToken);
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  bool line_start = true;
  for (const auto& t : tokens) {
    if (t == kEosToken) {
      out.push_back('\n');
      line_start = true;
      continue;
    }
    if (!line_start) out.push_back(' ');
    out += t;
    line_start = false;
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& tokens, int cap) {
  if (cap < 3) throw ConfigError("vocabulary cap smaller than special-token count");
  std::unordered_map<std::string, long> freq;
  for (const auto& t : tokens) ++freq[t];
  for (const char* s : {kUnkToken, kEosToken, kNumToken}) freq.emplace(s, 0);

  std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  // Specials first regardless of rank cut, then fill to cap in rank order.
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& e : entries)
    if (is_special(e.first)) kept.push_back(e);
  for (const auto& e : entries) {
    if (static_cast<int>(kept.size()) >= cap) break;
    if (!is_special(e.first)) kept.push_back(e);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [tok, count] : kept) {
    v.index.emplace(tok, static_cast<int>(v.tokens.size()));
    v.tokens.push_back(tok);
    v.counts.push_back(count);
  }
  v.unk_id = v.index.at(kUnkToken);
  v.eos_id = v.index.at(kEosToken);
  v.num_id = v.index.at(kNumToken);
  return v;
}

int Vocabulary::encode(const std::string& tok) const {
  auto it = index.find(tok);
  return it == index.end() ? unk_id : it->second;
}

std::vector<int> Vocabulary::encode_stream(const std::vector<std::string>& toks) const {
  std::vector<int> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(encode(t));
  return out;
}

std::uint64_t Vocabulary::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= '\n';
    h *= 1099511628211ULL;
  }
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write vocabulary file: " + path);
  for (int i = 0; i < size(); ++i) f << tokens[i] << '\t' << counts[i] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ConfigError("malformed vocabulary line: " + line);
    const std::string tok = line.substr(0, tab);
    v.index.emplace(tok, static_cast<int>(v.tokens.size()));
    v.tokens.push_back(tok);
    v.counts.push_back(std::stol(line.substr(tab + 1)));
  }
  auto find = [&](const char* s) {
    auto it = v.index.find(s);
    if (it == v.index.end()) throw ConfigError("vocabulary file lacks special token");
    return it->second;
  };
  v.unk_id = find(kUnkToken);
  v.eos_id = find(kEosToken);
  v.num_id = find(kNumToken);
  return v;
}

std::vector<CorpusBatch> make_batches(const std::vector<int>& stream, int batch_size,
                                      int bptt, int eos_id) {
  const long n = static_cast<long>(stream.size());
  if (batch_size < 1 || bptt < 1) throw ConfigError("make_batches: bad batch/bptt");
  if (n <= 2L * batch_size) throw ConfigError("make_batches: stream too short");
  const long seg = n / batch_size;          // contiguous segment per batch row
  const long nbatch = (seg - 1) / bptt;     // last segment column is target-only
  if (nbatch < 1) throw ConfigError("make_batches: stream too short for bptt window");

  std::vector<int> positions(stream.size());
  int p = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    positions[i] = p;
    p = stream[i] == eos_id ? 0 : p + 1;
  }

  std::vector<CorpusBatch> out;
  out.reserve(nbatch);
  for (long k = 0; k < nbatch; ++k) {
    CorpusBatch cb;
    cb.batch_size = batch_size;
    cb.bptt = bptt;
    cb.inputs.resize(static_cast<std::size_t>(batch_size) * bptt);
    cb.targets.resize(cb.inputs.size());
    cb.positions.resize(cb.inputs.size());
    for (int b = 0; b < batch_size; ++b)
      for (int t = 0; t < bptt; ++t) {
        const long idx = b * seg + k * bptt + t;
        cb.inputs[b * bptt + t] = stream[idx];
        cb.targets[b * bptt + t] = stream[idx + 1];
        cb.positions[b * bptt + t] = positions[idx];
      }
    out.push_back(std::move(cb));
  }
  return out;
}

void save_tokens(const std::string& path, const std::vector<std::string>& tokens) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write token file: " + path);
  for (const auto& t : tokens) f << t << '\n';
}

std::vector<std::string> load_tokens(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read token file: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace ctmos
