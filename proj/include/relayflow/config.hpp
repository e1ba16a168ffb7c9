#pragma once

// JSON system descriptions.
//
//   {"dimension": 2, "p": 2,
//    "bounding_box": [[-3, -3], [3, 3]],
//    "flows":   [{"field": ["-x2", "x1"], "T": 3.14159, "integrator": {"rtol": 1e-10}}, ...],
//    "regions": [{"f": "0.09 - ((x1-1)^2 + x2^2)", "lambda": 0}, ...],
//    "lambda_p": 0, "beta": 1}

#include <relayflow/dynamics.hpp>
#include <relayflow/errors.hpp>
#include <relayflow/expr.hpp>
#include <relayflow/geometry.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace relayflow {

struct LoadedConfig {
  RelaySystem system;
  std::uint64_t hash = 0;  // FNV-1a of the raw document
};

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

using json = nlohmann::json;

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  const std::string full = path.empty() ? key : path + "." + key;
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError(full, "missing");
  return obj.at(key);
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  return v.get<double>();
}

inline int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  return v.get<int>();
}

inline Expression expression(const json& v, int n, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected an expression string");
  try {
    return parse(v.get<std::string>(), n);
  } catch (const SyntaxError& e) {
    throw ConfigError(path, e.what());
  } catch (const UnknownVariable& e) {
    throw ConfigError(path, e.what());
  }
}

inline Point vector_of(const json& v, int n, const std::string& path) {
  if (!v.is_array() || static_cast<int>(v.size()) != n) {
    throw ConfigError(path, "expected an array of " + std::to_string(n) + " numbers");
  }
  Point x(n);
  for (int i = 0; i < n; ++i) x[i] = number(v[i], path + "[" + std::to_string(i) + "]");
  return x;
}

}  // namespace detail

/// Builds a RelaySystem from a JSON document; errors name the offending key.
inline LoadedConfig parse_config(const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("", "top level must be an object");

  const int n = detail::integer(detail::require(doc, "dimension", ""), "dimension");
  const int p = detail::integer(detail::require(doc, "p", ""), "p");
  if (n < 2) throw ConfigError("dimension", "must be at least 2");
  if (p < 2) throw ConfigError("p", "must be at least 2");

  const json& bb = detail::require(doc, "bounding_box", "");
  if (!bb.is_array() || bb.size() != 2) throw ConfigError("bounding_box", "expected [lower, upper]");
  const Point lo = detail::vector_of(bb[0], n, "bounding_box[0]");
  const Point hi = detail::vector_of(bb[1], n, "bounding_box[1]");
  if (!(lo.array() < hi.array()).all()) throw ConfigError("bounding_box", "lower must be below upper");

  const json& fl = detail::require(doc, "flows", "");
  if (!fl.is_array() || static_cast<int>(fl.size()) != p) throw ConfigError("flows", "expected p entries");
  std::vector<Flow> flows;
  for (int k = 0; k < p; ++k) {
    const std::string path = "flows[" + std::to_string(k) + "]";
    const json& fk = fl[k];
    const json& field = detail::require(fk, "field", path);
    if (!field.is_array() || static_cast<int>(field.size()) != n) {
      throw ConfigError(path + ".field", "expected n expression strings");
    }
    std::vector<Expression> comps;
    for (int j = 0; j < n; ++j) comps.push_back(detail::expression(field[j], n, path + ".field[" + std::to_string(j) + "]"));
    const double T = detail::number(detail::require(fk, "T", path), path + ".T");
    if (!(T > 0.0)) throw ConfigError(path + ".T", "must be positive");
    IntegratorSettings settings;
    if (fk.contains("integrator")) {
      const json& ig = fk.at("integrator");
      if (ig.contains("rtol")) settings.rtol = detail::number(ig.at("rtol"), path + ".integrator.rtol");
      if (ig.contains("atol")) settings.atol = detail::number(ig.at("atol"), path + ".integrator.atol");
      if (!(settings.rtol > 0.0)) throw ConfigError(path + ".integrator.rtol", "must be positive");
      if (!(settings.atol > 0.0)) throw ConfigError(path + ".integrator.atol", "must be positive");
    }
    flows.emplace_back(VectorField(std::move(comps), k + 1), T, settings);
  }

  const json& rg = detail::require(doc, "regions", "");
  if (!rg.is_array() || static_cast<int>(rg.size()) != p) throw ConfigError("regions", "expected p entries");
  std::vector<Region> regions;
  for (int i = 0; i < p; ++i) {
    const std::string path = "regions[" + std::to_string(i) + "]";
    Region r;
    r.f = detail::expression(detail::require(rg[i], "f", path), n, path + ".f");
    if (rg[i].contains("lambda")) r.lambda = detail::number(rg[i].at("lambda"), path + ".lambda");
    r.index = i;
    regions.push_back(std::move(r));
  }

  const double lambda_p = doc.contains("lambda_p") ? detail::number(doc.at("lambda_p"), "lambda_p") : regions[0].lambda;
  const int beta = doc.contains("beta") ? detail::integer(doc.at("beta"), "beta") : 1;
  if (beta < 1 || beta > p) throw ConfigError("beta", "must lie in 1..p");

  return {RelaySystem(n, std::move(flows), std::move(regions), Box{lo, hi}, lambda_p, beta), fnv1a(text)};
}

inline LoadedConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace relayflow
