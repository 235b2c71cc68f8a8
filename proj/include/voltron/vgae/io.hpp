#pragma once

#include <string>

#include "json.hpp"
#include "voltron/numerics/persist.hpp"
#include "voltron/vgae/model.hpp"

namespace voltron::vgae {

inline constexpr const char* kModelFormat = "voltron-model/1";

template <typename T>
nlohmann::json save_vgae(const VgaeModel<T>& model, const std::string& vocab_hash,
                         num::ParamEncoding enc = num::ParamEncoding::decimal) {
  const auto& d = model.dims();
  return {{"format", kModelFormat},
          {"kind", "vgae"},
          {"vocab_hash", vocab_hash},
          {"encoding", std::string(num::to_string(enc))},
          {"shapes",
           {{"vocab", d.vocab}, {"hidden", {d.hidden1, d.hidden2}}, {"latent", d.latent}, {"classes", VgaeDims::classes}}},
          {"params", num::params_to_json(model.params(), enc)}};
}

/// Refuses documents of another format or kind, and models trained against a
/// different vocabulary.
template <typename T>
VgaeModel<T> load_vgae(const nlohmann::json& doc, const std::string& expected_vocab_hash) {
  try {
    if (doc.value("format", "") != kModelFormat)
      throw ParseError("unsupported model format '" + doc.value("format", "") + "'");
    if (doc.value("kind", "") != "vgae") throw ParseError("model document is not a VGAE model");
    const auto hash = doc.at("vocab_hash").get<std::string>();
    if (hash != expected_vocab_hash) {
      throw ValidationError("VGAE model vocabulary hash " + hash + " does not match " + expected_vocab_hash);
    }
    const auto& s = doc.at("shapes");
    VgaeDims dims;
    dims.vocab = s.at("vocab").get<std::size_t>();
    dims.hidden1 = s.at("hidden").at(0).get<std::size_t>();
    dims.hidden2 = s.at("hidden").at(1).get<std::size_t>();
    dims.latent = s.at("latent").get<std::size_t>();
    const auto enc = num::parse_param_encoding(doc.at("encoding").get<std::string>());
    return VgaeModel<T>::from_params(dims, num::params_from_json<T>(doc.at("params"), enc));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("VGAE model document: ") + e.what());
  }
}

}  // namespace voltron::vgae
