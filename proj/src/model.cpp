#include "estnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "estnet/errors.hpp"

namespace estnet {

namespace {

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

std::string shape_str(Index r, Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

void require_shape(const std::string& who, const char* what, Index r, Index c, Index er, Index ec) {
  if (r != er || c != ec) {
    throw ConfigError(who + ": " + what + " has shape " + shape_str(r, c) + ", expected " +
                      shape_str(er, ec));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// EntryCoeffs / TimeVaryingMatrix

double EntryCoeffs::value(Step k) const {
  const auto kk = static_cast<double>(k);
  double v = c0;
  for (const auto& h : sin_terms) v += h.amplitude * std::sin(h.rate * kk + h.phase);
  for (const auto& h : cos_terms) v += h.amplitude * std::cos(h.rate * kk + h.phase);
  return v;
}

double EntryCoeffs::bound() const {
  double b = std::abs(c0);
  for (const auto& h : sin_terms) b += std::abs(h.amplitude);
  for (const auto& h : cos_terms) b += std::abs(h.amplitude);
  return b;
}

TimeVaryingMatrix TimeVaryingMatrix::constant(const Matrix& m) {
  std::vector<EntryCoeffs> entries;
  entries.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) entries.push_back(EntryCoeffs{m(r, c), {}, {}});
  return from_entries(m.rows(), m.cols(), std::move(entries));
}

TimeVaryingMatrix TimeVaryingMatrix::from_entries(Index rows, Index cols,
                                                  std::vector<EntryCoeffs> entries) {
  if (rows < 1 || cols < 1) throw DimensionError("time-varying matrix needs rows, cols >= 1");
  if (static_cast<Index>(entries.size()) != rows * cols) {
    throw DimensionError("time-varying matrix: expected " + std::to_string(rows * cols) +
                         " entries, got " + std::to_string(entries.size()));
  }
  for (const auto& e : entries) {
    if (!std::isfinite(e.bound())) throw NumericalError("time-varying matrix entry is not finite");
    for (const auto* terms : {&e.sin_terms, &e.cos_terms})
      for (const auto& h : *terms)
        if (!std::isfinite(h.rate) || !std::isfinite(h.phase))
          throw NumericalError("time-varying matrix harmonic is not finite");
  }
  TimeVaryingMatrix out;
  out.rows_ = rows;
  out.cols_ = cols;
  out.entries_ = std::move(entries);
  return out;
}

TimeVaryingMatrix TimeVaryingMatrix::from_table(std::vector<Matrix> table) {
  if (table.empty()) throw DimensionError("time-varying matrix table is empty");
  const Index rows = table.front().rows();
  const Index cols = table.front().cols();
  if (rows < 1 || cols < 1) throw DimensionError("time-varying matrix needs rows, cols >= 1");
  for (const auto& m : table) {
    if (m.rows() != rows || m.cols() != cols)
      throw DimensionError("time-varying matrix table has inconsistent shapes");
    if (!all_finite(m)) throw NumericalError("time-varying matrix table entry is not finite");
  }
  TimeVaryingMatrix out;
  out.rows_ = rows;
  out.cols_ = cols;
  out.table_ = std::move(table);
  return out;
}

bool TimeVaryingMatrix::is_constant() const {
  if (is_table()) {
    return std::all_of(table_.begin(), table_.end(),
                       [&](const Matrix& m) { return same_matrix(m, table_.front()); });
  }
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const EntryCoeffs& e) { return e.is_constant(); });
}

bool TimeVaryingMatrix::is_zero() const { return entry_bound().isZero(0.0); }

Matrix TimeVaryingMatrix::at(Step k) const {
  if (k < 0) throw ParameterError("time-varying matrix evaluated at negative step");
  if (is_table()) {
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(k), table_.size() - 1);
    return table_[idx];
  }
  Matrix m(rows_, cols_);
  for (Index r = 0; r < rows_; ++r)
    for (Index c = 0; c < cols_; ++c) m(r, c) = entries_[static_cast<std::size_t>(r * cols_ + c)].value(k);
  return m;
}

Matrix TimeVaryingMatrix::entry_bound() const {
  Matrix b = Matrix::Zero(rows_, cols_);
  if (is_table()) {
    for (const auto& m : table_) b = b.cwiseMax(m.cwiseAbs());
    return b;
  }
  for (Index r = 0; r < rows_; ++r)
    for (Index c = 0; c < cols_; ++c) b(r, c) = entries_[static_cast<std::size_t>(r * cols_ + c)].bound();
  return b;
}

bool TimeVaryingMatrix::operator==(const TimeVaryingMatrix& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_ || entries_ != other.entries_) return false;
  if (table_.size() != other.table_.size()) return false;
  for (std::size_t t = 0; t < table_.size(); ++t)
    if (!same_matrix(table_[t], other.table_[t])) return false;
  return true;
}

bool SubsystemSpec::operator==(const SubsystemSpec& other) const {
  return name == other.name && A == other.A && Gamma == other.Gamma && C == other.C &&
         D == other.D && same_matrix(Qw, other.Qw) && same_matrix(Qv, other.Qv);
}

// ---------------------------------------------------------------------------
// InterconnectedModel

InterconnectedModel::InterconnectedModel(std::vector<SubsystemSpec> subsystems,
                                         std::vector<CouplingSpec> couplings)
    : subsystems_(std::move(subsystems)), couplings_(std::move(couplings)) {
  if (subsystems_.empty()) throw ConfigError("model has no subsystems");

  std::set<std::string> names;
  for (const auto& s : subsystems_) {
    const std::string who = "subsystem '" + s.name + "'";
    if (s.name.empty()) throw ConfigError("subsystem with empty name");
    if (!names.insert(s.name).second) throw ConfigError(who + ": duplicate name");

    const Index n = s.A.rows();
    const Index m = s.C.rows();
    if (n < 1) throw ConfigError(who + ": A is empty");
    require_shape(who, "A", s.A.rows(), s.A.cols(), n, n);
    if (s.Qw.rows() < 1 || s.Qw.rows() != s.Qw.cols()) throw ConfigError(who + ": Qw must be square");
    if (s.Qv.rows() < 1 || s.Qv.rows() != s.Qv.cols()) throw ConfigError(who + ": Qv must be square");
    require_shape(who, "Gamma", s.Gamma.rows(), s.Gamma.cols(), n, s.Qw.rows());
    if (m < 1) throw ConfigError(who + ": C is empty");
    require_shape(who, "C", s.C.rows(), s.C.cols(), m, n);
    require_shape(who, "D", s.D.rows(), s.D.cols(), m, s.Qv.rows());

    try {
      if (max_eigenvalue_sym(-s.Qw) > 1e-10) throw ConfigError(who + ": Qw is not positive semidefinite");
      if (min_eigenvalue_sym(s.Qv) < 1e-12) throw ConfigError(who + ": Qv is not positive definite");
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(who + ": invalid noise covariance (" + e.what() + ")");
    }
  }

  neighbors_.assign(subsystems_.size(), {});
  for (std::size_t c = 0; c < couplings_.size(); ++c) {
    const auto& cp = couplings_[c];
    if (cp.source >= subsystems_.size() || cp.target >= subsystems_.size())
      throw ConfigError("coupling refers to an unknown subsystem");
    const std::string who = "coupling " + subsystems_[cp.source].name + "->" + subsystems_[cp.target].name;
    if (cp.source == cp.target) throw ConfigError(who + ": source equals target");
    require_shape(who, "A", cp.A.rows(), cp.A.cols(), subsystems_[cp.target].state_dim(),
                  subsystems_[cp.source].state_dim());
    if (!coupling_index_.emplace(std::make_pair(cp.target, cp.source), c).second)
      throw ConfigError(who + ": duplicate coupling");
    if (!cp.A.is_zero()) {
      neighbors_[cp.target].push_back(cp.source);
      neighbors_[cp.source].push_back(cp.target);
    }
  }
  for (auto& nb : neighbors_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }

  offsets_.reserve(subsystems_.size());
  for (const auto& s : subsystems_) {
    offsets_.push_back(total_state_);
    total_state_ += s.state_dim();
  }
}

std::vector<std::size_t> InterconnectedModel::later_neighbors(std::size_t i) const {
  std::vector<std::size_t> out;
  for (auto j : neighbors(i))
    if (j > i) out.push_back(j);
  return out;
}

bool InterconnectedModel::are_neighbors(std::size_t i, std::size_t j) const {
  const auto& nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

const TimeVaryingMatrix* InterconnectedModel::coupling(std::size_t target, std::size_t source) const {
  auto it = coupling_index_.find({target, source});
  return it == coupling_index_.end() ? nullptr : &couplings_[it->second].A;
}

std::optional<std::size_t> InterconnectedModel::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < subsystems_.size(); ++i)
    if (subsystems_[i].name == name) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Snapshots, bounds, augmentation

Matrix ModelSnapshot::coupling_or_zero(std::size_t target, std::size_t source) const {
  auto it = coupling.find({target, source});
  if (it != coupling.end()) return it->second;
  return Matrix::Zero(state_dims.at(target), state_dims.at(source));
}

ModelSnapshot evaluate(const InterconnectedModel& model, Step k) {
  ModelSnapshot snap;
  snap.k = k;
  for (const auto& s : model.subsystems()) {
    snap.A.push_back(s.A.at(k));
    snap.Gamma.push_back(s.Gamma.at(k));
    snap.C.push_back(s.C.at(k));
    snap.D.push_back(s.D.at(k));
    snap.state_dims.push_back(s.state_dim());
  }
  for (const auto& cp : model.couplings()) snap.coupling.emplace(std::make_pair(cp.target, cp.source), cp.A.at(k));
  return snap;
}

double NormBounds::coupling_bound(std::size_t target, std::size_t source) const {
  auto it = alpha_pair.find({target, source});
  return it == alpha_pair.end() ? 0.0 : it->second;
}

namespace {

struct BlockMats {
  Matrix A, Gamma, C, D;
};

// Assemble augmented matrices from per-subsystem pieces (values or bounds).
template <class SubFn, class CoupFn>
BlockMats assemble(const InterconnectedModel& model, SubFn&& sub, CoupFn&& coup) {
  const std::size_t l = model.size();
  std::vector<Matrix> gam, cc, dd;
  Matrix a = Matrix::Zero(model.total_state_dim(), model.total_state_dim());
  for (std::size_t i = 0; i < l; ++i) {
    const auto& s = model.subsystem(i);
    const Index off = model.state_offset(i);
    a.block(off, off, s.state_dim(), s.state_dim()) = sub(s.A);
    gam.push_back(sub(s.Gamma));
    cc.push_back(sub(s.C));
    dd.push_back(sub(s.D));
  }
  for (const auto& cp : model.couplings()) {
    a.block(model.state_offset(cp.target), model.state_offset(cp.source), cp.A.rows(), cp.A.cols()) =
        coup(cp);
  }
  return {std::move(a), block_diagonal(gam), block_diagonal(cc), block_diagonal(dd)};
}

void check_sampled(double sampled, double bound, const std::string& what) {
  if (sampled > bound + 1e-9 * std::max(1.0, bound))
    throw NumericalError(what + ": sampled norm exceeds analytic bound");
}

}  // namespace

NormBounds compute_bounds(const InterconnectedModel& model, Step sample_horizon) {
  if (sample_horizon < 1) throw ParameterError("compute_bounds: sample_horizon must be >= 1");
  NormBounds nb;
  const std::size_t l = model.size();

  for (std::size_t i = 0; i < l; ++i) nb.alpha.push_back(spectral_norm(model.subsystem(i).A.entry_bound()));
  for (std::size_t i = 0; i < l; ++i) {
    for (auto j : model.neighbors(i)) {
      const auto* c = model.coupling(i, j);
      nb.alpha_pair[{i, j}] = c ? spectral_norm(c->entry_bound()) : 0.0;
    }
  }
  const auto bounds = assemble(
      model, [](const TimeVaryingMatrix& m) { return m.entry_bound(); },
      [](const CouplingSpec& cp) { return cp.A.entry_bound(); });
  nb.delta_a = spectral_norm(bounds.A);
  nb.delta_gamma = spectral_norm(bounds.Gamma);
  nb.delta_c = spectral_norm(bounds.C);
  nb.delta_d = spectral_norm(bounds.D);

  nb.sampled_alpha.assign(l, 0.0);
  for (const auto& [key, _] : nb.alpha_pair) nb.sampled_alpha_pair[key] = 0.0;
  for (Step k = 0; k < sample_horizon; ++k) {
    const auto snap = evaluate(model, k);
    for (std::size_t i = 0; i < l; ++i) nb.sampled_alpha[i] = std::max(nb.sampled_alpha[i], spectral_norm(snap.A[i]));
    for (auto& [key, v] : nb.sampled_alpha_pair)
      v = std::max(v, spectral_norm(snap.coupling_or_zero(key.first, key.second)));
    const auto aug = augment(model, snap);
    nb.sampled_delta_a = std::max(nb.sampled_delta_a, spectral_norm(aug.A));
    nb.sampled_delta_gamma = std::max(nb.sampled_delta_gamma, spectral_norm(aug.Gamma));
    nb.sampled_delta_c = std::max(nb.sampled_delta_c, spectral_norm(aug.C));
    nb.sampled_delta_d = std::max(nb.sampled_delta_d, spectral_norm(aug.D));
  }

  for (std::size_t i = 0; i < l; ++i) check_sampled(nb.sampled_alpha[i], nb.alpha[i], "alpha_" + model.subsystem(i).name);
  for (const auto& [key, v] : nb.sampled_alpha_pair) check_sampled(v, nb.alpha_pair.at(key), "coupling bound");
  check_sampled(nb.sampled_delta_a, nb.delta_a, "delta_a");
  check_sampled(nb.sampled_delta_gamma, nb.delta_gamma, "delta_gamma");
  check_sampled(nb.sampled_delta_c, nb.delta_c, "delta_c");
  check_sampled(nb.sampled_delta_d, nb.delta_d, "delta_d");
  return nb;
}

AugmentedSystem augment(const InterconnectedModel& model, const ModelSnapshot& snap) {
  const std::size_t l = model.size();
  AugmentedSystem out;
  out.A = Matrix::Zero(model.total_state_dim(), model.total_state_dim());
  std::vector<Matrix> qw, qv;
  for (std::size_t i = 0; i < l; ++i) {
    const Index off = model.state_offset(i);
    out.A.block(off, off, snap.A[i].rows(), snap.A[i].cols()) = snap.A[i];
    qw.push_back(model.subsystem(i).Qw);
    qv.push_back(model.subsystem(i).Qv);
  }
  for (const auto& [key, blk] : snap.coupling)
    out.A.block(model.state_offset(key.first), model.state_offset(key.second), blk.rows(), blk.cols()) = blk;
  out.Gamma = block_diagonal(snap.Gamma);
  out.C = block_diagonal(snap.C);
  out.D = block_diagonal(snap.D);
  out.Qw = block_diagonal(qw);
  out.Qv = block_diagonal(qv);
  return out;
}

AugmentedSystem augment(const InterconnectedModel& model, Step k) { return augment(model, evaluate(model, k)); }

// ---------------------------------------------------------------------------
// Simulation-study system

InterconnectedModel example_system(double g) {
  if (!(g >= 0.0) || !std::isfinite(g)) throw ParameterError("example_system: g must be a finite value >= 0");

  auto c = [](double v) { return EntryCoeffs{v, {}, {}}; };
  auto with_cos = [](double v, double a) { return EntryCoeffs{v, {}, {Harmonic{a, 1.0, 0.0}}}; };
  auto with_sin = [](double v, double a) { return EntryCoeffs{v, {Harmonic{a, 1.0, 0.0}}, {}}; };
  using TV = TimeVaryingMatrix;

  const std::vector<TV> a = {
      TV::from_entries(2, 2, {c(0.2), with_cos(0.2, 0.2), with_sin(0.2, 0.1), c(0.2)}),
      TV::from_entries(2, 2, {c(0.3), with_cos(0.1, 0.3), with_sin(0.2, 0.2), c(0.2)}),
      TV::from_entries(2, 2, {c(0.3), with_sin(0.1, 0.2), with_cos(0.1, 0.1), c(0.2)}),
  };
  const std::vector<TV> cm = {
      TV::from_entries(1, 2, {with_cos(0.3, 0.3), c(0.4)}),
      TV::from_entries(2, 2, {with_cos(0.6, 0.2), c(0.3), c(0.2), with_sin(0.7, 0.1)}),
      TV::from_entries(2, 2, {with_sin(0.5, 0.1), c(0.3), c(0.1), with_cos(0.7, 0.1)}),
  };

  const Matrix qw = Matrix::Identity(2, 2) * 0.1;
  std::vector<SubsystemSpec> subs;
  for (std::size_t i = 0; i < 3; ++i) {
    const Index m = cm[i].rows();
    subs.push_back(SubsystemSpec{std::to_string(i + 1), a[i], TV::constant(Matrix::Identity(2, 2)), cm[i],
                                 TV::constant(Matrix::Identity(m, m)), qw, Matrix::Identity(m, m) * 0.1});
  }

  const TV coupling = TV::constant(Matrix::Identity(2, 2) * (0.1 * g));
  std::vector<CouplingSpec> couplings = {
      {2, 0, coupling},  // x3 enters x1
      {0, 1, coupling},  // x1 enters x2
      {1, 2, coupling},  // x2 enters x3
  };
  return InterconnectedModel(std::move(subs), std::move(couplings));
}

}  // namespace estnet
