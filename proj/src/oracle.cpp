#include <string>

#include "estnet/errors.hpp"
#include "estnet/estimator.hpp"

namespace estnet {

namespace {

Matrix stacked_gain(const InterconnectedModel& model, const std::vector<Matrix>& gains, Step k) {
  if (gains.size() != model.size()) throw InputError("gain history entry " + std::to_string(k) + " is incomplete");
  return block_diagonal(gains);
}

}  // namespace

std::vector<OracleState> oracle_exact_covariance(const InterconnectedModel& model, const GainHistory& gains,
                                                 const Matrix& P0) {
  const Index n = model.total_state_dim();
  if (P0.rows() != n || P0.cols() != n) throw DimensionError("P0 must match the total state dimension");
  std::vector<OracleState> out;
  out.push_back(OracleState{0, symmetrized(P0)});
  const Matrix I = Matrix::Identity(n, n);
  for (std::size_t s = 0; s < gains.size(); ++s) {
    const Step k = static_cast<Step>(s) + 1;
    const auto prev = augment(model, k - 1);
    const auto now = augment(model, k);
    const Matrix K = stacked_gain(model, gains[s], k);
    const Matrix kc = I - K * now.C;
    const Matrix ka = kc * prev.A;
    const Matrix kg = kc * prev.Gamma;
    const Matrix kd = K * now.D;
    Matrix P = ka * out.back().P * ka.transpose() + kg * prev.Qw * kg.transpose() + kd * now.Qv * kd.transpose();
    out.push_back(OracleState{k, 0.5 * (P + P.transpose())});
  }
  return out;
}

std::vector<Vector> oracle_centralized_estimator(const InterconnectedModel& model, const GainHistory& gains,
                                                 const std::vector<Vector>& measurements, const Vector& x0) {
  if (x0.size() != model.total_state_dim()) throw DimensionError("x0 must match the total state dimension");
  if (measurements.size() != gains.size()) throw InputError("one stacked measurement per step is required");
  std::vector<Vector> out{x0};
  for (std::size_t s = 0; s < gains.size(); ++s) {
    const Step k = static_cast<Step>(s) + 1;
    const auto prev = augment(model, k - 1);
    const auto now = augment(model, k);
    const Matrix K = stacked_gain(model, gains[s], k);
    if (measurements[s].size() != now.C.rows()) throw DimensionError("stacked measurement has the wrong length");
    const Vector pred = prev.A * out.back();
    out.push_back(pred + K * (measurements[s] - now.C * pred));
  }
  return out;
}

}  // namespace estnet
