#include <cmath>
#include <string>

#include <json.hpp>

#include "estnet/errors.hpp"
#include "estnet/model.hpp"

namespace estnet {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(where, "number is not finite");
  return v;
}

Matrix dense_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return Matrix::Constant(1, 1, number(j, where));
  if (!j.is_array() || j.empty()) fail(where, "expected a nonempty 2-D array");
  const auto rows = static_cast<Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) fail(where, "expected a nonempty 2-D array");
  const auto cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) fail(where, "ragged 2-D array");
    for (Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

std::vector<Harmonic> harmonics_from_json(const json& j, const std::string& where) {
  std::vector<Harmonic> out;
  if (j.is_null()) return out;
  if (!j.is_array()) fail(where, "expected a list of [amplitude, rate, phase]");
  for (const auto& h : j) {
    if (!h.is_array() || h.size() != 3) fail(where, "harmonic must be [amplitude, rate, phase]");
    out.push_back(Harmonic{number(h[0], where), number(h[1], where), number(h[2], where)});
  }
  return out;
}

TimeVaryingMatrix tv_from_json(const json& j, const std::string& where) {
  try {
    if (j.is_array() || j.is_number()) return TimeVaryingMatrix::constant(dense_from_json(j, where));
    if (!j.is_object()) fail(where, "expected a matrix");
    if (j.contains("table")) {
      std::vector<Matrix> table;
      for (const auto& t : j.at("table")) table.push_back(dense_from_json(t, where));
      auto tv = TimeVaryingMatrix::from_table(std::move(table));
      if ((j.contains("rows") && j["rows"].get<Index>() != tv.rows()) ||
          (j.contains("cols") && j["cols"].get<Index>() != tv.cols()))
        fail(where, "table shape disagrees with rows/cols");
      return tv;
    }
    if (!j.contains("rows") || !j.contains("cols") || !j.contains("entries"))
      fail(where, "time-varying matrix needs rows, cols and entries");
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    std::vector<EntryCoeffs> entries;
    for (const auto& e : j.at("entries")) {
      if (e.is_number()) {
        entries.push_back(EntryCoeffs{number(e, where), {}, {}});
        continue;
      }
      if (!e.is_object()) fail(where, "entry must be a number or {c0, sin, cos}");
      EntryCoeffs ec;
      ec.c0 = e.contains("c0") ? number(e["c0"], where) : 0.0;
      if (e.contains("sin")) ec.sin_terms = harmonics_from_json(e["sin"], where);
      if (e.contains("cos")) ec.cos_terms = harmonics_from_json(e["cos"], where);
      entries.push_back(std::move(ec));
    }
    return TimeVaryingMatrix::from_entries(rows, cols, std::move(entries));
  } catch (const json::exception& e) {
    fail(where, e.what());
  } catch (const DimensionError& e) {
    fail(where, e.what());
  } catch (const NumericalError& e) {
    fail(where, e.what());
  }
}

json dense_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json harmonics_to_json(const std::vector<Harmonic>& hs) {
  json out = json::array();
  for (const auto& h : hs) out.push_back({h.amplitude, h.rate, h.phase});
  return out;
}

json tv_to_json(const TimeVaryingMatrix& tv) {
  if (tv.is_table()) {
    json table = json::array();
    for (const auto& m : tv.table()) table.push_back(dense_to_json(m));
    return {{"rows", tv.rows()}, {"cols", tv.cols()}, {"table", std::move(table)}};
  }
  if (tv.is_constant()) return dense_to_json(tv.at(0));
  json entries = json::array();
  for (const auto& e : tv.entries()) {
    json je = {{"c0", e.c0}};
    if (!e.sin_terms.empty()) je["sin"] = harmonics_to_json(e.sin_terms);
    if (!e.cos_terms.empty()) je["cos"] = harmonics_to_json(e.cos_terms);
    entries.push_back(std::move(je));
  }
  return {{"rows", tv.rows()}, {"cols", tv.cols()}, {"entries", std::move(entries)}};
}

std::string name_of(const json& j, const std::string& where) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  fail(where, "expected a subsystem name");
}

}  // namespace

InterconnectedModel load_model(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("subsystems") || !doc["subsystems"].is_array())
    throw ConfigError("model document needs a \"subsystems\" array");

  std::vector<SubsystemSpec> subs;
  for (std::size_t s = 0; s < doc["subsystems"].size(); ++s) {
    const auto& js = doc["subsystems"][s];
    std::string where = "subsystems[" + std::to_string(s) + "]";
    if (!js.is_object()) fail(where, "expected an object");
    for (const char* key : {"name", "A", "Gamma", "C", "D", "Qw", "Qv"})
      if (!js.contains(key)) fail(where, std::string("missing field \"") + key + "\"");
    SubsystemSpec spec;
    spec.name = name_of(js["name"], where);
    where = "subsystem '" + spec.name + "'";
    spec.A = tv_from_json(js["A"], where + " A");
    spec.Gamma = tv_from_json(js["Gamma"], where + " Gamma");
    spec.C = tv_from_json(js["C"], where + " C");
    spec.D = tv_from_json(js["D"], where + " D");
    spec.Qw = dense_from_json(js["Qw"], where + " Qw");
    spec.Qv = dense_from_json(js["Qv"], where + " Qv");
    subs.push_back(std::move(spec));
  }

  auto index_by_name = [&](const std::string& name, const std::string& where) {
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i].name == name) return i;
    fail(where, "unknown subsystem '" + name + "'");
  };

  std::vector<CouplingSpec> couplings;
  if (doc.contains("couplings")) {
    if (!doc["couplings"].is_array()) throw ConfigError("\"couplings\" must be an array");
    for (std::size_t c = 0; c < doc["couplings"].size(); ++c) {
      const auto& jc = doc["couplings"][c];
      std::string where = "couplings[" + std::to_string(c) + "]";
      if (!jc.is_object() || !jc.contains("source") || !jc.contains("target") || !jc.contains("A"))
        fail(where, "coupling needs source, target and A");
      const auto src = name_of(jc["source"], where);
      const auto dst = name_of(jc["target"], where);
      where = "coupling " + src + "->" + dst;
      couplings.push_back(
          CouplingSpec{index_by_name(src, where), index_by_name(dst, where), tv_from_json(jc["A"], where)});
    }
  }
  return InterconnectedModel(std::move(subs), std::move(couplings));
}

std::string emit_model(const InterconnectedModel& model) {
  json doc;
  doc["subsystems"] = json::array();
  for (const auto& s : model.subsystems()) {
    doc["subsystems"].push_back({{"name", s.name},
                                 {"A", tv_to_json(s.A)},
                                 {"Gamma", tv_to_json(s.Gamma)},
                                 {"C", tv_to_json(s.C)},
                                 {"D", tv_to_json(s.D)},
                                 {"Qw", dense_to_json(s.Qw)},
                                 {"Qv", dense_to_json(s.Qv)}});
  }
  doc["couplings"] = json::array();
  for (const auto& c : model.couplings()) {
    doc["couplings"].push_back({{"source", model.subsystem(c.source).name},
                                {"target", model.subsystem(c.target).name},
                                {"A", tv_to_json(c.A)}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace estnet
