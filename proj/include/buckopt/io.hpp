#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "buckopt/errors.hpp"
#include "buckopt/model.hpp"

namespace buckopt {

/// JSON numbers are written with 17 significant digits so that doubles
/// survive a write/parse cycle exactly and repeated round trips are
/// byte-identical.
inline std::string format_json_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// CSV cells use the shortest decimal form that parses back to the same
/// double.
inline std::string format_csv_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                         const std::vector<std::string>& required, const char* where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const auto& k : allowed) known = known || k == item.key();
    if (!known)
      throw InputError(std::string(where) + ": unknown key \"" + item.key() + "\"");
  }
  for (const auto& k : required)
    if (!obj.contains(k)) throw InputError(std::string(where) + ": missing key \"" + k + "\"");
}

inline double number_at(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) throw InputError(where + ": expected a number");
  return v.get<double>();
}

inline int index_at(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_integer()) throw InputError(where + ": expected an integer");
  return v.get<int>();
}

inline const nlohmann::json& array_at(const nlohmann::json& parent, const char* key) {
  const auto& v = parent.at(key);
  if (!v.is_array()) throw InputError(std::string("model: \"") + key + "\" must be an array");
  return v;
}

} // namespace detail

/// Parses a model file.  The format is a single JSON object with keys
/// nodes, elements, supports, load, E, nu (optional) and groups; anything
/// else is rejected by name.  Indices are 0-based and validated by the
/// TrussModel constructor.
inline TrussModel parse_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("model: ") + e.what());
  }
  if (!j.is_object()) throw InputError("model: top level must be a JSON object");
  detail::require_keys(j, {"nodes", "elements", "supports", "load", "E", "nu", "groups"},
                       {"nodes", "elements", "supports", "load", "E", "groups"}, "model");

  const auto& jn = detail::array_at(j, "nodes");
  Eigen::VectorXd X(3 * static_cast<int>(jn.size()));
  for (int i = 0; i < static_cast<int>(jn.size()); ++i) {
    const std::string where = "nodes[" + std::to_string(i) + "]";
    if (!jn[i].is_array() || jn[i].size() != 3)
      throw InputError(where + ": expected [x, y, z]");
    for (int c = 0; c < 3; ++c) X[3 * i + c] = detail::number_at(jn[i][c], where);
  }

  const auto& je = detail::array_at(j, "elements");
  std::vector<ElementDef> elements;
  elements.reserve(je.size());
  for (int i = 0; i < static_cast<int>(je.size()); ++i) {
    const std::string where = "elements[" + std::to_string(i) + "]";
    if (!je[i].is_array() || je[i].size() != 3)
      throw InputError(where + ": expected [node_a, node_b, group]");
    elements.push_back({detail::index_at(je[i][0], where), detail::index_at(je[i][1], where),
                        detail::index_at(je[i][2], where)});
  }

  const auto& js = detail::array_at(j, "supports");
  std::vector<Support> supports;
  supports.reserve(js.size());
  for (int i = 0; i < static_cast<int>(js.size()); ++i) {
    const std::string where = "supports[" + std::to_string(i) + "]";
    if (!js[i].is_array() || js[i].size() != 2)
      throw InputError(where + ": expected [node, dof]");
    supports.push_back({detail::index_at(js[i][0], where), detail::index_at(js[i][1], where)});
  }

  const auto& jl = detail::array_at(j, "load");
  std::vector<PointLoad> loads;
  loads.reserve(jl.size());
  for (int i = 0; i < static_cast<int>(jl.size()); ++i) {
    const std::string where = "load[" + std::to_string(i) + "]";
    if (!jl[i].is_array() || jl[i].size() != 3)
      throw InputError(where + ": expected [node, dof, value]");
    loads.push_back({detail::index_at(jl[i][0], where), detail::index_at(jl[i][1], where),
                     detail::number_at(jl[i][2], where)});
  }

  const double E = detail::number_at(j.at("E"), "E");
  std::optional<double> nu;
  if (j.contains("nu")) nu = detail::number_at(j.at("nu"), "nu");

  const auto& jg = detail::array_at(j, "groups");
  std::vector<GroupDef> groups;
  groups.reserve(jg.size());
  for (int i = 0; i < static_cast<int>(jg.size()); ++i) {
    const std::string where = "groups[" + std::to_string(i) + "]";
    if (!jg[i].is_object()) throw InputError(where + ": expected an object");
    detail::require_keys(jg[i], {"a_init", "a_min", "a_max"}, {"a_init", "a_min", "a_max"},
                         where.c_str());
    groups.push_back({detail::number_at(jg[i]["a_init"], where + ".a_init"),
                      detail::number_at(jg[i]["a_min"], where + ".a_min"),
                      detail::number_at(jg[i]["a_max"], where + ".a_max")});
  }

  return TrussModel(std::move(X), std::move(elements), std::move(supports), std::move(loads), E,
                    nu, std::move(groups));
}

/// Serialises a model in canonical form: fixed key order, one entity per
/// line, numbers via format_json_number.  parse_model(serialize_model(m))
/// re-serialises byte-identically.
inline std::string serialize_model(const TrussModel& model) {
  std::ostringstream out;
  const auto& X = model.reference_coords();
  out << "{\n  \"nodes\": [\n";
  for (int i = 0; i < model.n_nodes(); ++i)
    out << "    [" << format_json_number(X[3 * i]) << ", " << format_json_number(X[3 * i + 1])
        << ", " << format_json_number(X[3 * i + 2]) << "]"
        << (i + 1 < model.n_nodes() ? "," : "") << "\n";
  out << "  ],\n  \"elements\": [\n";
  const auto& elems = model.elements();
  for (std::size_t i = 0; i < elems.size(); ++i)
    out << "    [" << elems[i].node_a << ", " << elems[i].node_b << ", " << elems[i].group << "]"
        << (i + 1 < elems.size() ? "," : "") << "\n";
  out << "  ],\n  \"supports\": [\n";
  const auto& sup = model.supports();
  for (std::size_t i = 0; i < sup.size(); ++i)
    out << "    [" << sup[i].node << ", " << sup[i].dof << "]" << (i + 1 < sup.size() ? "," : "")
        << "\n";
  out << "  ],\n  \"load\": [\n";
  const auto& loads = model.loads();
  for (std::size_t i = 0; i < loads.size(); ++i)
    out << "    [" << loads[i].node << ", " << loads[i].dof << ", "
        << format_json_number(loads[i].value) << "]" << (i + 1 < loads.size() ? "," : "") << "\n";
  out << "  ],\n  \"E\": " << format_json_number(model.youngs_modulus());
  if (model.poisson_ratio())
    out << ",\n  \"nu\": " << format_json_number(*model.poisson_ratio());
  out << ",\n  \"groups\": [\n";
  const auto& groups = model.groups();
  for (std::size_t i = 0; i < groups.size(); ++i)
    out << "    {\"a_init\": " << format_json_number(groups[i].a_init)
        << ", \"a_min\": " << format_json_number(groups[i].a_min)
        << ", \"a_max\": " << format_json_number(groups[i].a_max) << "}"
        << (i + 1 < groups.size() ? "," : "") << "\n";
  out << "  ]\n}\n";
  return out.str();
}

inline TrussModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

inline void save_model(const TrussModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write model file: " + path);
  out << serialize_model(model);
}

} // namespace buckopt
