#include "minimt/model/config.hpp"

#include <nlohmann/json.hpp>

namespace minimt::model {

using json = nlohmann::ordered_json;

void ModelConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw ValidationError("model." + field + ": " + why);
  };
  if (d_model < 2) bad("d_model", "must be >= 2");
  if (n_heads < 1) bad("n_heads", "must be >= 1");
  if (d_model % n_heads != 0) bad("d_model", "must be divisible by n_heads");
  if (d_model % 2 != 0) bad("d_model", "must be even for sinusoidal positions");
  if (d_ff < 1) bad("d_ff", "must be >= 1");
  if (n_enc_layers < 1) bad("n_enc_layers", "must be >= 1");
  if (n_dec_layers < 1) bad("n_dec_layers", "must be >= 1");
  if (vocab_size < 5) bad("vocab_size", "must cover specials, got " +
                                            std::to_string(vocab_size));
  if (max_positions < 2) bad("max_positions", "must be >= 2");
  if (dropout < 0.0f || dropout >= 1.0f) bad("dropout", "must be in [0, 1)");
  if (label_smoothing < 0.0f || label_smoothing >= 1.0f)
    bad("label_smoothing", "must be in [0, 1)");
}

std::optional<std::string> ModelConfig::field_diff(const ModelConfig& o) const {
  if (d_model != o.d_model) return "d_model";
  if (d_ff != o.d_ff) return "d_ff";
  if (n_heads != o.n_heads) return "n_heads";
  if (n_enc_layers != o.n_enc_layers) return "n_enc_layers";
  if (n_dec_layers != o.n_dec_layers) return "n_dec_layers";
  if (vocab_size != o.vocab_size) return "vocab_size";
  if (max_positions != o.max_positions) return "max_positions";
  if (dropout != o.dropout) return "dropout";
  if (label_smoothing != o.label_smoothing) return "label_smoothing";
  if (tie_embeddings != o.tie_embeddings) return "tie_embeddings";
  return std::nullopt;
}

std::string ModelConfig::to_json() const {
  json j;
  j["d_model"] = d_model;
  j["d_ff"] = d_ff;
  j["n_heads"] = n_heads;
  j["n_enc_layers"] = n_enc_layers;
  j["n_dec_layers"] = n_dec_layers;
  j["vocab_size"] = vocab_size;
  j["max_positions"] = max_positions;
  j["dropout"] = dropout;
  j["label_smoothing"] = label_smoothing;
  j["tie_embeddings"] = tie_embeddings;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.dropout = j.at("dropout").get<float>();
  c.label_smoothing = j.at("label_smoothing").get<float>();
  c.tie_embeddings = j.at("tie_embeddings").get<bool>();
  return c;
}

}  // namespace minimt::model
