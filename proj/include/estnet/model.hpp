#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "estnet/numerics.hpp"

namespace estnet {

using Step = std::int64_t;

/// One sinusoid `amplitude * f(rate * k + phase)`.
struct Harmonic {
  double amplitude = 0.0;
  double rate = 0.0;
  double phase = 0.0;

  bool operator==(const Harmonic&) const = default;
};

/// Entry value at step k: c0 + sum a*sin(w k + p) + sum a*cos(w k + p).
struct EntryCoeffs {
  double c0 = 0.0;
  std::vector<Harmonic> sin_terms;
  std::vector<Harmonic> cos_terms;

  double value(Step k) const;
  /// |c0| + sum |a|; bounds |value(k)| for every k.
  double bound() const;
  bool is_constant() const { return sin_terms.empty() && cos_terms.empty(); }

  bool operator==(const EntryCoeffs&) const = default;
};

/// A bounded matrix sequence, either entrywise constant-plus-sinusoids or an
/// explicit per-step table whose last entry is held for later steps.
class TimeVaryingMatrix {
 public:
  TimeVaryingMatrix() = default;

  static TimeVaryingMatrix constant(const Matrix& m);
  static TimeVaryingMatrix from_entries(Index rows, Index cols, std::vector<EntryCoeffs> entries);
  static TimeVaryingMatrix from_table(std::vector<Matrix> table);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool is_table() const { return !table_.empty(); }
  bool is_constant() const;
  /// True when every entry is identically zero for all k.
  bool is_zero() const;

  Matrix at(Step k) const;
  /// Entrywise bound matrix B with |M(k)| <= B for all k.
  Matrix entry_bound() const;

  const std::vector<EntryCoeffs>& entries() const { return entries_; }
  const std::vector<Matrix>& table() const { return table_; }

  bool operator==(const TimeVaryingMatrix& other) const;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<EntryCoeffs> entries_;  // row-major
  std::vector<Matrix> table_;
};

struct SubsystemSpec {
  std::string name;
  TimeVaryingMatrix A;      // n x n
  TimeVaryingMatrix Gamma;  // n x dim(Qw)
  TimeVaryingMatrix C;      // m x n
  TimeVaryingMatrix D;      // m x dim(Qv)
  Matrix Qw;
  Matrix Qv;

  Index state_dim() const { return A.rows(); }
  Index measurement_dim() const { return C.rows(); }

  bool operator==(const SubsystemSpec& other) const;
};

/// x_source enters the dynamics of x_target through `A` (n_target x n_source).
struct CouplingSpec {
  std::size_t source = 0;
  std::size_t target = 0;
  TimeVaryingMatrix A;

  bool operator==(const CouplingSpec&) const = default;
};

/// Validated interconnected system. Immutable after construction.
///
/// Neighbor sets are symmetric: j is a neighbor of i when either coupling
/// direction between them is present and not identically zero. Absent
/// directions behave as zero blocks everywhere.
class InterconnectedModel {
 public:
  InterconnectedModel(std::vector<SubsystemSpec> subsystems, std::vector<CouplingSpec> couplings);

  std::size_t size() const { return subsystems_.size(); }
  const SubsystemSpec& subsystem(std::size_t i) const { return subsystems_.at(i); }
  const std::vector<SubsystemSpec>& subsystems() const { return subsystems_; }
  const std::vector<CouplingSpec>& couplings() const { return couplings_; }

  /// Omega_i, sorted ascending.
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  /// Sigma_i: neighbors with a larger index.
  std::vector<std::size_t> later_neighbors(std::size_t i) const;
  bool are_neighbors(std::size_t i, std::size_t j) const;

  /// The block through which x_j enters x_i, or nullptr when absent.
  const TimeVaryingMatrix* coupling(std::size_t target, std::size_t source) const;

  std::optional<std::size_t> index_of(std::string_view name) const;
  Index state_offset(std::size_t i) const { return offsets_.at(i); }
  Index total_state_dim() const { return total_state_; }

  bool operator==(const InterconnectedModel& other) const {
    return subsystems_ == other.subsystems_ && couplings_ == other.couplings_;
  }

 private:
  std::vector<SubsystemSpec> subsystems_;
  std::vector<CouplingSpec> couplings_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> coupling_index_;
  std::vector<Index> offsets_;
  Index total_state_ = 0;
};

/// All model matrices evaluated at one step.
struct ModelSnapshot {
  Step k = 0;
  std::vector<Matrix> A;
  std::vector<Matrix> Gamma;
  std::vector<Matrix> C;
  std::vector<Matrix> D;
  /// Keyed by (target, source); only present couplings.
  std::map<std::pair<std::size_t, std::size_t>, Matrix> coupling;

  std::vector<Index> state_dims;

  /// A_{target,source}, or a zero block of the right shape.
  Matrix coupling_or_zero(std::size_t target, std::size_t source) const;
};

ModelSnapshot evaluate(const InterconnectedModel& model, Step k);

struct NormBounds {
  /// Certified bounds from entrywise bound matrices.
  std::vector<double> alpha;
  std::map<std::pair<std::size_t, std::size_t>, double> alpha_pair;  // (target, source)
  double delta_a = 0.0;
  double delta_gamma = 0.0;
  double delta_c = 0.0;
  double delta_d = 0.0;

  /// Largest norms actually observed over the sampled horizon.
  std::vector<double> sampled_alpha;
  std::map<std::pair<std::size_t, std::size_t>, double> sampled_alpha_pair;
  double sampled_delta_a = 0.0;
  double sampled_delta_gamma = 0.0;
  double sampled_delta_c = 0.0;
  double sampled_delta_d = 0.0;

  /// alpha_{target,source}; zero for absent couplings.
  double coupling_bound(std::size_t target, std::size_t source) const;
};

NormBounds compute_bounds(const InterconnectedModel& model, Step sample_horizon);

struct AugmentedSystem {
  Matrix A;
  Matrix Gamma;
  Matrix C;
  Matrix D;
  Matrix Qw;
  Matrix Qv;
};

AugmentedSystem augment(const InterconnectedModel& model, Step k);
AugmentedSystem augment(const InterconnectedModel& model, const ModelSnapshot& snap);

/// The three-subsystem ring used in the simulation study; g scales couplings.
InterconnectedModel example_system(double g);

InterconnectedModel load_model(std::string_view document);
std::string emit_model(const InterconnectedModel& model);

}  // namespace estnet
