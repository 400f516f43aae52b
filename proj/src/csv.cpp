#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "estnet/errors.hpp"
#include "estnet/harness.hpp"

namespace estnet {

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_trace_csv(std::ostream& out, const InterconnectedModel& model, const SimulationTrace& trace) {
  out << "k,subsystem,component,x,xhat\n";
  for (std::size_t k = 0; k < trace.x.size(); ++k) {
    for (std::size_t i = 0; i < model.size(); ++i) {
      const auto& x = trace.x[k][i];
      const bool has_est = k < trace.xhat.size();
      for (Index c = 0; c < x.size(); ++c) {
        out << k << ',' << model.subsystem(i).name << ',' << c << ',' << format_number(x(c)) << ','
            << (has_est ? format_number(trace.xhat[k][i](c)) : "") << '\n';
      }
    }
  }
}

void write_mse_csv(std::ostream& out, const MseReport& report) {
  out << "k,mse\n";
  for (std::size_t k = 0; k < report.mse.size(); ++k) out << k + 1 << ',' << format_number(report.mse[k]) << '\n';
}

void write_amse_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "g,amse\n";
  for (const auto& r : rows) out << format_number(r.g) << ',' << format_number(r.amse) << '\n';
}

void write_beta_csv(std::ostream& out, const InterconnectedModel& model, const BetaAssignment& beta) {
  out << "subsystem,alpha,beta\n";
  for (std::size_t i = 0; i < model.size(); ++i)
    out << model.subsystem(i).name << ',' << format_number(beta.alpha[i]) << ',' << format_number(beta.beta[i]) << '\n';
}

void write_gains_csv(std::ostream& out, const InterconnectedModel& model, const GainHistory& gains) {
  out << "k,subsystem,row,col,value\n";
  for (std::size_t s = 0; s < gains.size(); ++s) {
    for (std::size_t i = 0; i < gains[s].size(); ++i) {
      const auto& K = gains[s][i];
      for (Index r = 0; r < K.rows(); ++r)
        for (Index c = 0; c < K.cols(); ++c)
          out << s + 1 << ',' << model.subsystem(i).name << ',' << r << ',' << c << ',' << format_number(K(r, c))
              << '\n';
    }
  }
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T parse(const std::string& cell, int line) {
  T v{};
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw InputError("gains CSV line " + std::to_string(line) + ": cannot parse '" + cell + "'");
  return v;
}

}  // namespace

GainHistory read_gains_csv(std::istream& in, const InterconnectedModel& model) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("gains CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "k,subsystem,row,col,value") throw InputError("gains CSV header must be k,subsystem,row,col,value");

  std::map<long long, std::vector<Matrix>> steps;
  std::map<long long, std::vector<std::vector<bool>>> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 5) throw InputError("gains CSV line " + std::to_string(lineno) + ": expected 5 columns");
    const auto k = parse<long long>(cells[0], lineno);
    const auto idx = model.index_of(cells[1]);
    if (!idx) throw InputError("gains CSV line " + std::to_string(lineno) + ": unknown subsystem '" + cells[1] + "'");
    const auto r = parse<long long>(cells[2], lineno);
    const auto c = parse<long long>(cells[3], lineno);
    const auto v = parse<double>(cells[4], lineno);
    if (k < 1) throw InputError("gains CSV line " + std::to_string(lineno) + ": k must be >= 1");
    const auto& sub = model.subsystem(*idx);
    if (r < 0 || r >= sub.state_dim() || c < 0 || c >= sub.measurement_dim())
      throw InputError("gains CSV line " + std::to_string(lineno) + ": entry outside the gain shape");
    auto& ks = steps[k];
    auto& mask = seen[k];
    if (ks.empty()) {
      for (const auto& s : model.subsystems()) {
        ks.push_back(Matrix::Zero(s.state_dim(), s.measurement_dim()));
        mask.emplace_back(static_cast<std::size_t>(s.state_dim() * s.measurement_dim()), false);
      }
    }
    ks[*idx](r, c) = v;
    mask[*idx][static_cast<std::size_t>(r * sub.measurement_dim() + c)] = true;
  }

  GainHistory out;
  long long expect = 1;
  for (auto& [k, ks] : steps) {
    if (k != expect) throw InputError("gains CSV skips step " + std::to_string(expect));
    for (const auto& m : seen[k])
      for (bool b : m)
        if (!b) throw InputError("gains CSV step " + std::to_string(k) + " is incomplete");
    out.push_back(std::move(ks));
    ++expect;
  }
  return out;
}

std::string run_report_json(const InterconnectedModel& model, const SimulationConfig& config, const RunResult& result) {
  using nlohmann::json;
  json doc;
  doc["config"] = {{"horizon", config.horizon}, {"seed", config.seed},   {"mode", to_string(config.mode)},
                   {"lambda", config.lambda},   {"eta", config.eta},     {"rho", config.rho},
                   {"p0", config.p0}};
  if (result.beta) {
    json b = json::array();
    for (std::size_t i = 0; i < model.size(); ++i)
      b.push_back({{"subsystem", model.subsystem(i).name}, {"alpha", result.beta->alpha[i]},
                   {"beta", std::isfinite(result.beta->beta[i]) ? json(result.beta->beta[i]) : json("inf")}});
    doc["beta"] = std::move(b);
  } else {
    doc["beta"] = nullptr;
  }
  json steps = json::array();
  for (const auto& r : result.records) {
    steps.push_back({{"k", r.k},
                     {"subsystem", model.subsystem(r.subsystem).name},
                     {"objective", r.objective},
                     {"constraint_mode", to_string(r.mode)},
                     {"solver_status", sdp::to_string(r.status)},
                     {"residual_norm", r.residual_norm},
                     {"iterations", r.iterations}});
  }
  doc["steps"] = std::move(steps);
  doc["failure"] = result.failure ? json(result.failure->message) : json(nullptr);
  return doc.dump(2);
}

}  // namespace estnet
