#ifndef OFFSET_RISK_INSTANCE_IO_HPP
#define OFFSET_RISK_INSTANCE_IO_HPP

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "offset_risk/model.hpp"

namespace offset_risk {

/// A distribution together with an optional dictionary on its support.
struct Instance {
  DiscreteDistribution dist;
  std::optional<Dictionary> dictionary;
};

/// Parses {"atoms": [{"x": [...], "y": ...}], "probs": [...], "b": ...,
/// "dictionary": [[...], ...]}. The dictionary is optional.
inline Instance instance_from_json(const nlohmann::json& doc) {
  try {
    const double b = doc.at("b").get<double>();
    std::vector<Atom> atoms;
    for (const auto& a : doc.at("atoms")) {
      Atom atom;
      if (a.contains("x")) atom.x = a.at("x").get<std::vector<double>>();
      atom.y = a.at("y").get<double>();
      atoms.push_back(std::move(atom));
    }
    auto probs = doc.at("probs").get<std::vector<double>>();
    DiscreteDistribution dist(std::move(atoms), std::move(probs), b);
    std::optional<Dictionary> dict;
    if (doc.contains("dictionary")) {
      dict.emplace(doc.at("dictionary").get<std::vector<AtomFunction>>(), b);
      dict->check_compatible(dist);
    }
    return Instance{std::move(dist), std::move(dict)};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed instance document: ") + e.what());
  }
}

inline nlohmann::json instance_to_json(const DiscreteDistribution& dist,
                                       const Dictionary* dict = nullptr) {
  nlohmann::json doc;
  doc["b"] = dist.b();
  doc["atoms"] = nlohmann::json::array();
  for (const auto& atom : dist.support()) doc["atoms"].push_back({{"x", atom.x}, {"y", atom.y}});
  doc["probs"] = std::vector<double>(dist.probs().begin(), dist.probs().end());
  if (dict) doc["dictionary"] = dict->rows();
  return doc;
}

inline Instance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open instance file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("instance file " + path.string() + " is not valid JSON: " + e.what());
  }
  return instance_from_json(doc);
}

}  // namespace offset_risk

#endif  // OFFSET_RISK_INSTANCE_IO_HPP
