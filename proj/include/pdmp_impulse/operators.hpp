#pragma once

// Dynamic-programming operators of the impulse control problem. Continuous
// versions (F, H, I, J, K, M, L, L^d) integrate along the flow by
// quadrature; the quantized versions replace the conditional expectations by
// finite sums over a QuantizedChain.

#include "pdmp_impulse/core.hpp"
#include "pdmp_impulse/quantizer.hpp"

#include <span>
#include <string>
#include <vector>

namespace pdmp {

// ---------------------------------------------------------------------------
// Continuous operators
// ---------------------------------------------------------------------------

/// F(x, t) = int_0^{t ^ t*} e^{-alpha s - Lambda(x, s)} f(phi(x, s)) ds.
double op_F(const Problem& problem, const State& x, double t);

/// Hv(x, t) = e^{-alpha tau - Lambda(x, tau)} v(phi(x, tau)), tau = t ^ t*(x).
double op_H(const Problem& problem, const ValueFunction& v, const State& x, double t);

/// Iw(x, t) = int_0^{t ^ t*} e^{-alpha s - Lambda} lambda(phi) Qw(phi) ds.
double op_I(const Problem& problem, const ValueFunction& w, const State& x, double t);

/// int_0^{t ^ t*} e^{-alpha s - Lambda(x, s)} ds; together with H1 and I1
/// it satisfies H1 + I1 + alpha * survival_integral = 1 at t = t*.
double survival_integral(const Problem& problem, const State& x, double t);

/// J(v, w)(x, t) = F(x, t) + Hv(x, t) + Iw(x, t).
double op_J(const Problem& problem, const ValueFunction& v, const ValueFunction& w,
            const State& x, double t);

/// Kw(x) = F(x, t*) + e^{-alpha t* - Lambda(x, t*)} Qw(phi(x, t*)) + Iw(x, t*).
double op_K(const Problem& problem, const ValueFunction& w, const State& x);

struct MResult {
  double value = 0.0;
  std::size_t argmin = 0;  // smallest index on ties
};

/// M phi(x) = min_i c(x, y^i) + phi_values[i]. Throws ConfigError when the
/// control set is empty or the sizes differ.
MResult op_M(const CostModel& cost, std::span<const double> phi_values, const State& x);

/// L(v, w)(x) with the infimum over t taken on the points of `mesh` (which
/// should cover [0, t*(x)]), wedged with Kw(x).
double op_L_on_mesh(const Problem& problem, const ValueFunction& v, const ValueFunction& w,
                    const State& x, std::span<const double> mesh);

/// Uniform mesh of n + 1 points on [0, t*(x)].
std::vector<double> uniform_mesh(double t_star, int n);

// ---------------------------------------------------------------------------
// Time grids
// ---------------------------------------------------------------------------

/// Path-adapted grid G(z) = {i Delta : 0 <= i <= n(z)}, n(z) = int(t*/Delta) - 1,
/// so that the last point is at most t* - Delta. `degenerate` marks the {0}
/// fallback used when no admissible Delta fits below t*.
struct TimeGrid {
  double delta = 0.0;
  std::vector<double> points;
  bool degenerate = false;
};

/// Grid for a given step. Throws DomainError unless t* > 0; Delta >= t*
/// yields the degenerate grid {0}.
TimeGrid build_time_grid(double t_star, double delta);

/// Step selection: Delta = max(floor * (1 + 1e-9), t* / n_max), where the
/// floor is the per-layer lower bound required by the error bounds.
struct DeltaPolicy {
  std::vector<double> floors;  // by conditioning layer; missing entries mean 0
  int n_max = 200;

  double floor(int layer) const;
  TimeGrid grid(double t_star, int layer) const;
};

// ---------------------------------------------------------------------------
// Quantized operators
// ---------------------------------------------------------------------------

/// Values on the z-projection of a layer: one entry per distinct z.
using GridValues = std::vector<double>;

struct LdResult {
  double value = 0.0;
  bool intervene = false;       // min over the grid of J beat K strictly
  double time = 0.0;            // minimizing grid time when intervening
  double j_min = 0.0;
  double k_value = 0.0;
};

/// Quantized operators on one chain. Conditioning on Zhat_n = z merges all
/// cells of layer n sharing the point z; their transition rows are averaged
/// with the cell weights. Time grids and the F values on them do not depend
/// on the value functions and are computed once here. Both the problem and
/// the chain are copied.
class QuantizedOperators {
 public:
  QuantizedOperators(const Problem& problem, const QuantizedChain& chain,
                     const DeltaPolicy& policy, int threads = 1);

  const Problem& problem() const { return problem_; }
  const QuantizedChain& chain() const { return chain_; }
  int horizon() const { return chain_.horizon(); }

  std::size_t group_count(int layer) const;
  const State& group_point(int layer, std::size_t group) const;
  /// Group of each cell of a layer.
  const std::vector<std::size_t>& cell_groups(int layer) const;
  /// Combined weight of the cells in a group.
  double group_weight(int layer, std::size_t group) const;
  const TimeGrid& time_grid(int layer, std::size_t group) const;
  double exit_time(int layer, std::size_t group) const;

  /// K^_{n+1} w(z) for z the group point of layer n; w lives on layer n + 1.
  double K(int layer, std::size_t group, std::span<const double> w_next) const;

  /// J^_{n+1}(v, w)(z, t); t must be a point of the group's time grid,
  /// otherwise DomainError.
  double J(int layer, std::size_t group, const ValueFunction& v,
           std::span<const double> w_next, double t) const;

  /// min_{t in G(z)} J^(v, w)(z, t) ^ K^ w(z).
  LdResult L_d(int layer, std::size_t group, const ValueFunction& v,
               std::span<const double> w_next) const;

  /// L^d for every group of a layer, optionally in parallel.
  std::vector<LdResult> L_d_layer(int layer, const ValueFunction& v,
                                  std::span<const double> w_next) const;

  /// ||Delta(Zhat_n)||_p over the cell weights of layer n; degenerate cells
  /// contribute t*(z).
  double delta_norm(int layer) const;
  /// min_z Delta(z) over layer n, with t*(z) for degenerate cells.
  double min_delta(int layer) const;
  /// Number of groups of layer n that fell back to the {0} grid.
  std::size_t degenerate_count(int layer) const;

 private:
  struct Successor {
    double s;
    double prob;
    std::size_t group;
  };
  struct Group {
    State z;
    double weight = 0.0;
    double t_star = 0.0;
    TimeGrid grid;
    std::vector<double> F_grid;  // F(z, t_i) on the grid
    double F_tstar = 0.0;
    std::vector<Successor> next;  // sorted by s
  };
  struct Layer {
    std::vector<Group> groups;
    std::vector<std::size_t> cell_group;
  };

  void check_layer(int layer, std::span<const double> w_next) const;
  double jump_term(const Group& g, std::span<const double> w_next) const;

  Problem problem_;
  QuantizedChain chain_;
  std::vector<Layer> layers_;
  int threads_;
};

}  // namespace pdmp
