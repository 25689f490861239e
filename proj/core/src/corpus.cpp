#include "minimt/corpus.hpp"

#include <algorithm>
#include <cinttypes>
#include <map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "minimt/rng.hpp"

namespace minimt {

LidPredicate membership_predicate(const Universe& u) {
  // Capture by value: the universe object may outlive the caller's reference.
  Universe copy = u;
  return [copy](const std::string& code, std::span<const TokenId> tokens) {
    const CipherLanguage* lang = copy.find(code);
    if (!lang) return false;
    for (TokenId t : tokens)
      if (!lang->contains(t)) return false;
    return true;
  };
}

FilterReason classify_pair(const SentencePair& p, const FilterConfig& cfg,
                           const LidPredicate* lid) {
  if (p.src.empty() || p.tgt.empty() || p.src_lang == p.tgt_lang)
    return FilterReason::Malformed;
  if (p.src.size() > static_cast<size_t>(cfg.max_words) ||
      p.tgt.size() > static_cast<size_t>(cfg.max_words))
    return FilterReason::Length;
  double a = static_cast<double>(p.src.size());
  double b = static_cast<double>(p.tgt.size());
  // "exceeding" reads as strictly greater: a ratio of exactly max_ratio is kept.
  if (std::max(a / b, b / a) > cfg.max_ratio) return FilterReason::Ratio;
  if (cfg.lid_enabled && lid) {
    if (!(*lid)(p.src_lang, p.src) || !(*lid)(p.tgt_lang, p.tgt))
      return FilterReason::Lid;
  }
  return FilterReason::Keep;
}

void FilterTally::count(FilterReason r) {
  switch (r) {
    case FilterReason::Keep: ++kept; break;
    case FilterReason::Malformed: ++malformed; break;
    case FilterReason::Length: ++length; break;
    case FilterReason::Ratio: ++ratio; break;
    case FilterReason::Lid: ++lid; break;
  }
}

std::string FilterTally::to_json() const {
  nlohmann::ordered_json j;
  j["kept"] = kept;
  j["rejected"]["malformed"] = malformed;
  j["rejected"]["length"] = length;
  j["rejected"]["ratio"] = ratio;
  j["rejected"]["lid"] = lid;
  j["total"] = total();
  return j.dump(2);
}

std::vector<SentencePair> filter_corpus(std::span<const SentencePair> pairs,
                                        const FilterConfig& cfg,
                                        const LidPredicate& lid,
                                        FilterTally* tally) {
  cfg.validate();
  std::vector<SentencePair> kept;
  kept.reserve(pairs.size());
  FilterTally local;
  for (const auto& p : pairs) {
    FilterReason r = classify_pair(p, cfg, &lid);
    local.count(r);
    if (r == FilterReason::Keep) kept.push_back(p);
  }
  if (tally) *tally = local;
  return kept;
}

std::vector<SentencePair> mix_for_direct_ft(
    std::span<const SentencePair> english_centric,
    std::span<const SentencePair> direct, const MixSpec& spec, uint64_t seed) {
  if (spec.cap_per_direction < 1)
    throw ValidationError("mix cap_per_direction must be >= 1");
  if (english_centric.empty() || direct.empty())
    throw ValidationError("mix_for_direct_ft requires non-empty corpora");

  std::map<Direction, std::vector<size_t>> by_dir;
  for (size_t i = 0; i < english_centric.size(); ++i)
    by_dir[english_centric[i].direction()].push_back(i);

  std::vector<SentencePair> out;
  out.reserve(direct.size() + by_dir.size() * spec.cap_per_direction);
  for (auto& [dir, idx] : by_dir) {
    Rng rng(counter_hash(seed, 0x317, fnv1a64(dir.src), fnv1a64(dir.tgt)));
    size_t take = std::min(spec.cap_per_direction, idx.size());
    // Partial Fisher-Yates: the first `take` entries are a uniform sample
    // without replacement.
    for (size_t i = 0; i < take; ++i) {
      size_t j = i + rng.next_below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(english_centric[idx[i]]);
    }
  }
  out.insert(out.end(), direct.begin(), direct.end());
  Rng shuffle_rng(counter_hash(seed, 0x5481));
  shuffle_rng.shuffle(out.data(), out.size());
  return out;
}

namespace {

std::string pair_key(const SentencePair& p) {
  std::string k;
  k.reserve((p.src.size() + p.tgt.size()) * 4 + 2);
  for (TokenId t : p.src) {
    k += std::to_string(t);
    k += ' ';
  }
  k += '\t';
  for (TokenId t : p.tgt) {
    k += std::to_string(t);
    k += ' ';
  }
  return k;
}

}  // namespace

std::vector<SentencePair> dedup_against(
    std::span<const SentencePair> train,
    std::span<const std::span<const SentencePair>> holdouts) {
  std::unordered_set<std::string> held;
  for (const auto& h : holdouts)
    for (const auto& p : h) held.insert(pair_key(p));
  std::vector<SentencePair> out;
  out.reserve(train.size());
  for (const auto& p : train)
    if (!held.count(pair_key(p))) out.push_back(p);
  return out;
}

// --- TSV io ------------------------------------------------------------------

CorpusWriter::CorpusWriter(const std::filesystem::path& path) : path_(path) {
  f_ = fopen(path.string().c_str(), "wb");
  if (!f_) throw RuntimeFailure("cannot write corpus file " + path.string());
}

CorpusWriter::~CorpusWriter() {
  if (f_) fclose(f_);
}

void CorpusWriter::write(const SentencePair& p) {
  std::string line;
  line.reserve(32 + 4 * (p.src.size() + p.tgt.size()));
  line += p.src_lang;
  line += '\t';
  line += p.tgt_lang;
  line += '\t';
  for (size_t i = 0; i < p.src.size(); ++i) {
    if (i) line += ' ';
    line += std::to_string(p.src[i]);
  }
  line += '\t';
  for (size_t i = 0; i < p.tgt.size(); ++i) {
    if (i) line += ' ';
    line += std::to_string(p.tgt[i]);
  }
  line += '\n';
  if (fwrite(line.data(), 1, line.size(), f_) != line.size())
    throw RuntimeFailure("short write to " + path_.string());
}

void write_corpus(std::span<const SentencePair> pairs,
                  const std::filesystem::path& path) {
  CorpusWriter w(path);
  for (const auto& p : pairs) w.write(p);
}

CorpusReader::CorpusReader(const std::filesystem::path& path) : path_(path) {
  f_ = fopen(path.string().c_str(), "rb");
  if (!f_) throw RuntimeFailure("cannot open corpus file " + path.string());
}

CorpusReader::~CorpusReader() {
  if (f_) fclose(f_);
}

namespace {

bool parse_ids(const char* s, const char* end, std::vector<TokenId>& out) {
  out.clear();
  const char* p = s;
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p >= end) break;
    char* next = nullptr;
    long v = strtol(p, &next, 10);
    if (next == p) return false;
    if (v < 0 || v > INT32_MAX) return false;
    out.push_back(static_cast<TokenId>(v));
    p = next;
    if (p < end && *p != ' ') return false;
  }
  return true;
}

}  // namespace

std::optional<SentencePair> CorpusReader::next() {
  std::string line;
  int c;
  while ((c = fgetc(f_)) != EOF && c != '\n') line.push_back(static_cast<char>(c));
  if (c == EOF && line.empty()) return std::nullopt;
  ++line_;
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto fail = [&](const std::string& what) -> std::optional<SentencePair> {
    throw RuntimeFailure("corpus " + path_.string() + " line " +
                         std::to_string(line_) + ": " + what);
  };

  std::array<size_t, 3> tabs{};
  size_t ntab = 0;
  for (size_t i = 0; i < line.size() && ntab < 3; ++i)
    if (line[i] == '\t') tabs[ntab++] = i;
  if (ntab != 3 || line.find('\t', tabs[2] + 1) != std::string::npos)
    return fail("expected 4 tab-separated fields");

  SentencePair p;
  p.src_lang = line.substr(0, tabs[0]);
  p.tgt_lang = line.substr(tabs[0] + 1, tabs[1] - tabs[0] - 1);
  if (p.src_lang.empty() || p.tgt_lang.empty())
    return fail("empty language code");
  if (p.src_lang == p.tgt_lang) return fail("identical source and target language");
  const char* base = line.data();
  if (!parse_ids(base + tabs[1] + 1, base + tabs[2], p.src) ||
      !parse_ids(base + tabs[2] + 1, base + line.size(), p.tgt))
    return fail("bad token id field");
  return p;
}

std::vector<SentencePair> read_corpus(const std::filesystem::path& path) {
  CorpusReader r(path);
  std::vector<SentencePair> out;
  while (auto p = r.next()) out.push_back(std::move(*p));
  return out;
}

FilterTally filter_file(const std::filesystem::path& in,
                        const std::filesystem::path& out,
                        const FilterConfig& cfg, const LidPredicate& lid) {
  cfg.validate();
  CorpusReader reader(in);
  CorpusWriter writer(out);
  FilterTally tally;
  while (auto p = reader.next()) {
    FilterReason r = classify_pair(*p, cfg, &lid);
    tally.count(r);
    if (r == FilterReason::Keep) writer.write(*p);
  }
  return tally;
}

}  // namespace minimt
