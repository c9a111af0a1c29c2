#pragma once

#include "krnet/dual.hpp"
#include "krnet/parameter_store.hpp"
#include "krnet/tape.hpp"

#include <functional>
#include <span>
#include <vector>

namespace krnet::ad {

struct LossAndGradient {
  double value = 0.0;
  std::vector<double> gradient;  ///< aligned with the parameter store
};

/// Records `loss` on a fresh tape and returns d(loss)/d(theta_k) for every
/// scalar of `store`. Throws NumericError (with the layer index) when a
/// recorded value overflows.
LossAndGradient grad_params(const std::function<Var(Tape&)>& loss, const ParameterStore& store);

/// Sum of per-chunk losses over `rows` items split into fixed chunks of
/// `chunk` rows; `partial(tape, begin, len)` records one chunk's share. Chunks
/// may run on different threads, and the totals are reduced in chunk order, so
/// the result does not depend on the thread count.
LossAndGradient grad_params_chunked(const std::function<Var(Tape&, std::size_t, std::size_t)>& partial,
                                    const ParameterStore& store, std::size_t rows, std::size_t chunk);

/// (f, df/dx_i, d2f/dx_i dx_j) at a point.
struct SpatialDerivs {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
};

using DualFunction = std::function<DualScalar(std::span<const DualScalar>)>;

/// Exact first and mixed second partials of a scalar function written over
/// DualScalar. Mixed partials are recovered by polarization from the
/// directions e_i, e_j and e_i + e_j.
SpatialDerivs spatial_derivs(const DualFunction& f, std::span<const double> x, int i, int j);

/// Directions whose second channels polarize to d2/dx_i dx_j:
/// {e_i} when i == j, otherwise {e_i, e_j, e_i + e_j}. Shape d x P.
Matrix polarization_directions(int d, int i, int j);

/// Turns a one-column jet evaluated along polarization_directions(d, i, j)
/// into a recorded B x 3 value-only node (f, df/dx_i, d2f/dx_i dx_j).
Var polarize(Var jet, bool same_axis);

using TapeFunction = std::function<Var(Tape&, Var x)>;

/// Same as the DualFunction overload for a function recorded on a tape
/// (e.g. a model log-density); evaluated at one point.
SpatialDerivs spatial_derivs(const TapeFunction& f, std::span<const double> x, int i, int j);

/// Central-difference gradient of f at x with step h.
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, double h);

/// Max over components of |fd - analytic| / max(|analytic|, 1e-12).
double fd_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                std::span<const double> analytic, double h);

/// Largest relative discrepancy between two vectors with the same floor.
double max_relative_error(std::span<const double> value, std::span<const double> reference);

}  // namespace krnet::ad
