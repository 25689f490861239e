#include "minimt/language.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "minimt/rng.hpp"

namespace minimt {

using json = nlohmann::ordered_json;

std::string to_hex(uint64_t v) {
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

uint64_t file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open file: " + path.string());
  uint64_t h = kFnvBasis;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    if (!in) break;
  }
  return h;
}

CipherLanguage::CipherLanguage(LanguageId lang, std::vector<TokenId> permutation,
                               TokenId surface_offset, bool reorder)
    : lang_(std::move(lang)),
      perm_(std::move(permutation)),
      offset_(surface_offset),
      reorder_(reorder) {
  inv_perm_.assign(perm_.size(), -1);
  for (size_t i = 0; i < perm_.size(); ++i) {
    TokenId p = perm_[i];
    if (p < 0 || p >= static_cast<TokenId>(perm_.size()) || inv_perm_[p] != -1)
      throw ValidationError("permutation for language '" + lang_.code +
                            "' is not a bijection");
    inv_perm_[p] = static_cast<TokenId>(i);
  }
}

namespace {

// Adjacent-swap with per-language parity. Pivot (index 0) never reorders.
// Languages with odd index swap (0,1),(2,3),...; even index swap (1,2),(3,4),...
void parity_swap(std::vector<TokenId>& t, int lang_index) {
  if (lang_index == 0) return;
  size_t start = (lang_index % 2 == 1) ? 0 : 1;
  for (size_t i = start; i + 1 < t.size(); i += 2) std::swap(t[i], t[i + 1]);
}

}  // namespace

std::vector<TokenId> CipherLanguage::render(const PivotSentence& p) const {
  std::vector<TokenId> out;
  out.reserve(p.tokens.size());
  for (TokenId t : p.tokens) {
    if (t < 0 || t >= v_content())
      throw ValidationError("pivot index " + std::to_string(t) +
                            " out of range for v_content " +
                            std::to_string(v_content()));
    out.push_back(offset_ + perm_[t]);
  }
  if (reorder_) parity_swap(out, lang_.index);
  return out;
}

PivotSentence CipherLanguage::parse(std::span<const TokenId> surface) const {
  std::vector<TokenId> tmp(surface.begin(), surface.end());
  if (reorder_) parity_swap(tmp, lang_.index);  // involution
  PivotSentence p;
  p.tokens.reserve(tmp.size());
  for (TokenId s : tmp) {
    if (!contains(s))
      throw ValidationError("surface token " + std::to_string(s) +
                            " outside range of language '" + lang_.code + "'");
    p.tokens.push_back(inv_perm_[s - offset_]);
  }
  return p;
}

Universe Universe::build(int n_languages, int v_content, uint64_t seed,
                         int max_len, bool reorder) {
  if (n_languages < 3)
    throw ValidationError(
        "need >=3 languages (pivot plus two so direct X-Y translation "
        "exists), got " +
        std::to_string(n_languages));
  if (v_content < 2)
    throw ValidationError("v_content must be >= 2, got " +
                          std::to_string(v_content));
  if (max_len < 1)
    throw ValidationError("max_len must be >= 1, got " + std::to_string(max_len));

  Universe u;
  u.v_content_ = v_content;
  u.max_len_ = max_len;
  u.seed_ = seed;
  for (int i = 0; i < n_languages; ++i) {
    std::vector<TokenId> perm(v_content);
    for (int k = 0; k < v_content; ++k) perm[k] = k;
    if (i > 0) {
      Rng rng(counter_hash(seed, 0x9c1f, static_cast<uint64_t>(i)));
      rng.shuffle(perm.data(), perm.size());
    }
    std::string code = (i == 0) ? "en" : "x" + std::to_string(i);
    u.langs_.emplace_back(LanguageId{code, i}, std::move(perm),
                          static_cast<TokenId>(i * v_content), reorder);
  }
  return u;
}

const CipherLanguage* Universe::find(const std::string& code) const {
  for (const auto& l : langs_)
    if (l.code() == code) return &l;
  return nullptr;
}

const CipherLanguage& Universe::by_code(const std::string& code) const {
  const CipherLanguage* l = find(code);
  if (!l) throw ValidationError("unknown language code '" + code + "'");
  return *l;
}

std::optional<int> Universe::language_index_of(TokenId surface) const {
  if (surface < 0 || surface >= surface_vocab_size()) return std::nullopt;
  return surface / v_content_;
}

bool Universe::operator==(const Universe& o) const {
  if (v_content_ != o.v_content_ || max_len_ != o.max_len_ ||
      seed_ != o.seed_ || langs_.size() != o.langs_.size())
    return false;
  for (size_t i = 0; i < langs_.size(); ++i) {
    if (langs_[i].code() != o.langs_[i].code() ||
        langs_[i].surface_offset() != o.langs_[i].surface_offset() ||
        langs_[i].permutation() != o.langs_[i].permutation() ||
        langs_[i].reorder() != o.langs_[i].reorder())
      return false;
  }
  return true;
}

std::string Universe::to_json() const {
  json j;
  j["version"] = 1;
  j["seed"] = seed_;
  j["v_content"] = v_content_;
  j["max_len"] = max_len_;
  j["languages"] = json::array();
  for (const auto& l : langs_) {
    json lj;
    lj["code"] = l.code();
    lj["index"] = l.index();
    lj["surface_offset"] = l.surface_offset();
    lj["reorder"] = l.reorder();
    lj["permutation"] = l.permutation();
    j["languages"].push_back(lj);
  }
  return j.dump(2);
}

Universe Universe::from_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw RuntimeFailure("universe file: unsupported version");
  Universe u;
  u.seed_ = j["seed"].get<uint64_t>();
  u.v_content_ = j["v_content"].get<int>();
  u.max_len_ = j["max_len"].get<int>();
  for (const auto& lj : j["languages"]) {
    u.langs_.emplace_back(
        LanguageId{lj["code"].get<std::string>(), lj["index"].get<int>()},
        lj["permutation"].get<std::vector<TokenId>>(),
        lj["surface_offset"].get<TokenId>(), lj["reorder"].get<bool>());
  }
  if (u.langs_.size() < 3) throw RuntimeFailure("universe file: <3 languages");
  return u;
}

void Universe::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write universe to " + path.string());
  out << to_json() << "\n";
}

Universe Universe::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open universe file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(ss.str());
  } catch (const json::exception& e) {
    throw RuntimeFailure("malformed universe file " + path.string() + ": " +
                         e.what());
  }
}

std::vector<TokenId> oracle_translate(std::span<const TokenId> s,
                                      const CipherLanguage& from,
                                      const CipherLanguage& to) {
  return to.render(from.parse(s));
}

namespace {

struct ZipfSampler {
  std::vector<double> cdf;
  int lo = 0;

  ZipfSampler(double s, int lo_, int hi) : lo(lo_) {
    if (hi <= lo_) throw ValidationError("empty token support in sample spec");
    if (s < 0) throw ValidationError("zipf exponent must be >= 0");
    cdf.resize(static_cast<size_t>(hi - lo_));
    double acc = 0;
    for (size_t k = 0; k < cdf.size(); ++k) {
      acc += std::pow(static_cast<double>(k + 1), -s);
      cdf[k] = acc;
    }
    for (auto& c : cdf) c /= acc;
  }

  TokenId draw(Rng& rng) const {
    double u = rng.next_unit();
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    size_t k = std::min(static_cast<size_t>(it - cdf.begin()), cdf.size() - 1);
    return lo + static_cast<TokenId>(k);
  }
};

int draw_length(const LengthDist& d, int max_len, Rng& rng) {
  int len = 1;
  switch (d.kind) {
    case LengthDist::Kind::Uniform: {
      if (d.lo < 1 || d.hi < d.lo)
        throw ValidationError("uniform length distribution requires 1 <= lo <= hi");
      len = static_cast<int>(rng.next_range(d.lo, d.hi));
      break;
    }
    case LengthDist::Kind::Poisson: {
      if (d.mean <= 0) throw ValidationError("poisson length mean must be > 0");
      len = rng.next_poisson(d.mean);
      break;
    }
    case LengthDist::Kind::Fixed:
      if (d.fixed < 1) throw ValidationError("fixed length must be >= 1");
      len = d.fixed;
      break;
  }
  return std::clamp(len, 1, max_len);
}

PivotSentence draw_sentence(const Universe& u, const PivotSampleSpec& spec,
                            const ZipfSampler& zipf, Rng& rng) {
  PivotSentence p;
  int len = draw_length(spec.length, u.max_len(), rng);
  p.tokens.reserve(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) p.tokens.push_back(zipf.draw(rng));
  return p;
}

ZipfSampler make_zipf(const Universe& u, const PivotSampleSpec& spec) {
  int hi = spec.support_hi > 0 ? spec.support_hi : u.v_content();
  if (spec.support_lo < 0 || hi > u.v_content())
    throw ValidationError("token support outside [0, v_content)");
  return ZipfSampler(spec.zipf_s, spec.support_lo, hi);
}

struct PivotHash {
  size_t operator()(const PivotSentence& p) const {
    return static_cast<size_t>(
        fnv1a64(p.tokens.data(), p.tokens.size() * sizeof(TokenId)));
  }
};

}  // namespace

std::vector<PivotSentence> sample_pivot(const Universe& u,
                                        const PivotSampleSpec& spec) {
  if (spec.count < 1) throw ValidationError("sample count must be >= 1");
  ZipfSampler zipf = make_zipf(u, spec);
  Rng rng(counter_hash(spec.seed, 0x5a17));
  std::vector<PivotSentence> out;
  out.reserve(static_cast<size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i)
    out.push_back(draw_sentence(u, spec, zipf, rng));
  return out;
}

std::vector<Direction> english_centric_directions(const Universe& u) {
  std::vector<Direction> out;
  const std::string& en = u.pivot().code();
  for (int i = 1; i < u.n_languages(); ++i) {
    out.push_back({en, u.at(i).code()});
    out.push_back({u.at(i).code(), en});
  }
  return out;
}

std::vector<Direction> direct_directions(const Universe& u) {
  std::vector<Direction> out;
  for (int i = 1; i < u.n_languages(); ++i)
    for (int j = 1; j < u.n_languages(); ++j)
      if (i != j) out.push_back({u.at(i).code(), u.at(j).code()});
  return out;
}

std::vector<Direction> all_directions(const Universe& u) {
  std::vector<Direction> out;
  for (int i = 0; i < u.n_languages(); ++i)
    for (int j = 0; j < u.n_languages(); ++j)
      if (i != j) out.push_back({u.at(i).code(), u.at(j).code()});
  return out;
}

CorpusBundle make_corpus(const Universe& u, const CorpusSpec& spec) {
  if (spec.pairs_per_direction < 1)
    throw ValidationError("pairs_per_direction must be >= 1");
  for (const auto& d :
       {std::cref(spec.train_directions), std::cref(spec.eval_directions)}) {
    for (const auto& dir : d.get()) {
      if (dir.src == dir.tgt)
        throw ValidationError("direction with identical languages: " +
                              dir.label());
      u.by_code(dir.src);
      u.by_code(dir.tgt);
    }
  }

  ZipfSampler zipf = make_zipf(u, spec.sample);
  Rng rng(counter_hash(spec.seed, 0xc0de));

  // A shared pool of unique pivot sentences, partitioned dev | test | train
  // so the three splits are pairwise disjoint at the pivot level no matter
  // which directions each split renders.
  size_t pool_train = std::max<size_t>(2 * spec.pairs_per_direction, 64);
  size_t need = pool_train + spec.dev_per_direction + spec.test_per_direction;
  std::unordered_set<PivotSentence, PivotHash> seen;
  std::vector<PivotSentence> pool;
  size_t attempts = 0, max_attempts = 200 * need + 10000;
  while (pool.size() < need && attempts++ < max_attempts) {
    PivotSentence p = draw_sentence(u, spec.sample, zipf, rng);
    if (seen.insert(p).second) pool.push_back(std::move(p));
  }
  if (pool.size() < need)
    throw ValidationError(
        "pivot space too small to draw " + std::to_string(need) +
        " unique sentences; enlarge v_content or shorten the corpus");

  auto dev_begin = pool.begin();
  auto test_begin = dev_begin + spec.dev_per_direction;
  auto train_begin = test_begin + spec.test_per_direction;

  CorpusBundle out;
  for (const auto& dir : spec.train_directions) {
    const auto& src = u.by_code(dir.src);
    const auto& tgt = u.by_code(dir.tgt);
    Rng dir_rng(counter_hash(spec.seed, 0xd1c, fnv1a64(dir.src), fnv1a64(dir.tgt)));
    // Per-direction subset of the train pool, without replacement.
    std::vector<uint32_t> idx(pool_train);
    for (uint32_t k = 0; k < pool_train; ++k) idx[k] = k;
    dir_rng.shuffle(idx.data(), idx.size());
    for (int k = 0; k < spec.pairs_per_direction; ++k) {
      const PivotSentence& p = *(train_begin + idx[static_cast<size_t>(k)]);
      out.train.push_back({dir.src, dir.tgt, src.render(p), tgt.render(p)});
    }
  }
  auto render_eval = [&](std::vector<SentencePair>& dst,
                         std::vector<PivotSentence>::iterator begin, int n) {
    for (const auto& dir : spec.eval_directions) {
      const auto& src = u.by_code(dir.src);
      const auto& tgt = u.by_code(dir.tgt);
      for (int k = 0; k < n; ++k) {
        const PivotSentence& p = *(begin + k);
        dst.push_back({dir.src, dir.tgt, src.render(p), tgt.render(p)});
      }
    }
  };
  render_eval(out.dev, dev_begin, spec.dev_per_direction);
  render_eval(out.test, test_begin, spec.test_per_direction);
  return out;
}

CorpusBundle make_corpus(const Universe& u, std::span<const Direction> directions,
                         int pairs_per_direction, uint64_t seed) {
  CorpusSpec spec;
  spec.train_directions.assign(directions.begin(), directions.end());
  spec.eval_directions = spec.train_directions;
  spec.pairs_per_direction = pairs_per_direction;
  spec.seed = seed;
  return make_corpus(u, spec);
}

}  // namespace minimt
