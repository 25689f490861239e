#include "minimt/model/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <vector>

#include <nlohmann/json.hpp>

#include "minimt/rng.hpp"

namespace minimt::model {

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'M', 'N', 'M', 'T', 'C', 'K', 'P', '1'};

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) fclose(f);
  }
};
using File = std::unique_ptr<FILE, FileCloser>;

void write_tensors(FILE* f, const Parameters<float>& p,
                   const std::filesystem::path& path) {
  p.for_each([&](const std::string&, const Mat<float>& m) {
    size_t n = static_cast<size_t>(m.size());
    if (fwrite(m.data(), sizeof(float), n, f) != n)
      throw RuntimeFailure("short write to checkpoint " + path.string());
  });
}

void read_tensors(FILE* f, Parameters<float>& p,
                  const std::filesystem::path& path) {
  p.for_each([&](const std::string& name, Mat<float>& m) {
    size_t n = static_cast<size_t>(m.size());
    if (fread(m.data(), sizeof(float), n, f) != n)
      throw RuntimeFailure("checkpoint " + path.string() +
                           " is truncated (while reading " + name + ")");
  });
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["version"] = 1;
  header["config"] = json::parse(ckpt.config.to_json());
  header["step"] = ckpt.step;
  header["optimizer"] = {{"peak_lr", ckpt.opt.peak_lr},
                         {"warmup", ckpt.opt.warmup},
                         {"beta1", ckpt.opt.beta1},
                         {"beta2", ckpt.opt.beta2},
                         {"eps", ckpt.opt.eps}};
  header["seeds"] = {{"data", ckpt.seeds.data_seed},
                     {"dropout", ckpt.seeds.dropout_seed}};
  header["provenance"] = {{"scheme", ckpt.provenance.scheme},
                          {"data_digest", ckpt.provenance.data_digest},
                          {"vocab_digest", ckpt.provenance.vocab_digest},
                          {"parent", ckpt.provenance.parent},
                          {"note", ckpt.provenance.note},
                          {"cumulative_base", ckpt.provenance.cumulative_base}};
  header["params_digest"] = to_hex(ckpt.params.digest());
  std::string htext = header.dump();

  File f(fopen(path.string().c_str(), "wb"));
  if (!f) throw RuntimeFailure("cannot write checkpoint " + path.string());
  uint64_t hlen = htext.size();
  if (fwrite(kMagic, 1, 8, f.get()) != 8 ||
      fwrite(&hlen, sizeof(hlen), 1, f.get()) != 1 ||
      fwrite(htext.data(), 1, htext.size(), f.get()) != htext.size())
    throw RuntimeFailure("short write to checkpoint " + path.string());
  write_tensors(f.get(), ckpt.params, path);
  write_tensors(f.get(), ckpt.m, path);
  write_tensors(f.get(), ckpt.v, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, bool* digest_ok) {
  File f(fopen(path.string().c_str(), "rb"));
  if (!f) throw RuntimeFailure("cannot open checkpoint " + path.string());
  char magic[8];
  uint64_t hlen = 0;
  if (fread(magic, 1, 8, f.get()) != 8 || memcmp(magic, kMagic, 8) != 0)
    throw RuntimeFailure("checkpoint " + path.string() +
                         ": bad magic (not a checkpoint or unsupported version)");
  if (fread(&hlen, sizeof(hlen), 1, f.get()) != 1 || hlen > (64u << 20))
    throw RuntimeFailure("checkpoint " + path.string() + ": bad header length");
  std::string htext(hlen, '\0');
  if (fread(htext.data(), 1, hlen, f.get()) != hlen)
    throw RuntimeFailure("checkpoint " + path.string() + " is truncated (header)");

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw RuntimeFailure("checkpoint " + path.string() +
                         ": malformed header: " + e.what());
  }
  if (header.at("version").get<int>() != 1)
    throw RuntimeFailure("checkpoint " + path.string() +
                         ": unsupported version " +
                         std::to_string(header.at("version").get<int>()));

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(header.at("config").dump());
  ckpt.step = header.at("step").get<int64_t>();
  const auto& o = header.at("optimizer");
  ckpt.opt.peak_lr = o.at("peak_lr").get<double>();
  ckpt.opt.warmup = o.at("warmup").get<int64_t>();
  ckpt.opt.beta1 = o.at("beta1").get<double>();
  ckpt.opt.beta2 = o.at("beta2").get<double>();
  ckpt.opt.eps = o.at("eps").get<double>();
  ckpt.seeds.data_seed = header.at("seeds").at("data").get<uint64_t>();
  ckpt.seeds.dropout_seed = header.at("seeds").at("dropout").get<uint64_t>();
  const auto& pv = header.at("provenance");
  ckpt.provenance.scheme = pv.at("scheme").get<std::string>();
  ckpt.provenance.data_digest = pv.at("data_digest").get<std::string>();
  ckpt.provenance.vocab_digest = pv.at("vocab_digest").get<std::string>();
  ckpt.provenance.parent = pv.at("parent").get<std::string>();
  ckpt.provenance.note = pv.at("note").get<std::string>();
  ckpt.provenance.cumulative_base = pv.at("cumulative_base").get<int64_t>();

  ckpt.params = Parameters<float>::shaped(ckpt.config);
  ckpt.m = Parameters<float>::shaped(ckpt.config);
  ckpt.v = Parameters<float>::shaped(ckpt.config);
  read_tensors(f.get(), ckpt.params, path);
  read_tensors(f.get(), ckpt.m, path);
  read_tensors(f.get(), ckpt.v, path);

  bool ok = to_hex(ckpt.params.digest()) ==
            header.at("params_digest").get<std::string>();
  if (digest_ok) *digest_ok = ok;
  if (!ok)
    fprintf(stderr,
            "warning: checkpoint %s parameter digest mismatch (file may have "
            "been modified)\n",
            path.string().c_str());
  return ckpt;
}

Checkpoint reset_nonparameter_state(Checkpoint ckpt, uint64_t new_seed) {
  ckpt.m.set_zero();
  ckpt.v.set_zero();
  ckpt.provenance.cumulative_base += ckpt.step;
  ckpt.step = 0;
  ckpt.seeds.data_seed = counter_hash(new_seed, 0xda7a);
  ckpt.seeds.dropout_seed = counter_hash(new_seed, 0xd409);
  return ckpt;
}

}  // namespace minimt::model
